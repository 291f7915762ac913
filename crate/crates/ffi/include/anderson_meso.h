#ifndef ANDERSON_MESO_H
#define ANDERSON_MESO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmStatus {
  AM_STATUS_OK = 0,
  AM_STATUS_NULL_POINTER = 1,
  AM_STATUS_INVALID_ARGUMENT = 2,
  AM_STATUS_NUMERICAL = 3,
  AM_STATUS_BUFFER_TOO_SMALL = 4,
  AM_STATUS_PANIC = 5,
} AmStatus;

// Box of `Z^d` sites.
typedef struct AmBox AmBox;

// One realization `H = Δ + V` on a box.
typedef struct AmOperator AmOperator;

// Sylvester inertia of `H - shift`.
typedef struct AmInertia {
  size_t negative;
  size_t zero;
  size_t positive;
  double shift_used;
  // Non-zero when a singular pivot forced a nudged shift.
  uint8_t jittered;
} AmInertia;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on the same thread.
const char *am_last_error(void);

// Library version as a static NUL-terminated string.
const char *am_version(void);

// Box `[lower_k, upper_k]` along each of `dim` axes.
//
// # Safety
// `lower` and `upper` must point to `dim` values; `out` must be writable.
enum AmStatus am_box_new(const int64_t *lower,
                         const int64_t *upper,
                         size_t dim,
                         struct AmBox **out);

// Centered box `[-L, L]^dim`.
//
// # Safety
// `out` must be writable.
enum AmStatus am_box_centered(int64_t half_width, size_t dim, struct AmBox **out);

// Number of sites, or 0 for a null handle.
//
// # Safety
// `b` must be null or a live handle.
size_t am_box_site_count(const struct AmBox *b);

// # Safety
// `b` must be null or a handle not yet freed.
void am_box_free(struct AmBox *b);

// Sample `V` i.i.d. uniform on `[-W/2, W/2]`; the same `(box, seed)` always
// gives the same potential.
//
// # Safety
// `b` must be a live handle; `out` must be writable.
enum AmStatus am_operator_sample(const struct AmBox *b,
                                 double width,
                                 uint64_t seed,
                                 struct AmOperator **out);

// Operator with an explicit potential in row-major site order.
//
// # Safety
// `potential` must point to `len` values; `b` must be a live handle.
enum AmStatus am_operator_from_potential(const struct AmBox *b,
                                         const double *potential,
                                         size_t len,
                                         struct AmOperator **out);

// # Safety
// `op` must be null or a live handle.
size_t am_operator_site_count(const struct AmOperator *op);

// # Safety
// `op` must be null or a handle not yet freed.
void am_operator_free(struct AmOperator *op);

// Eigenvalues in the open interval `(lo, hi)`, by inertia.
//
// # Safety
// `op` must be a live handle; `out` must be writable.
enum AmStatus am_count_in_interval(const struct AmOperator *op, double lo, double hi, size_t *out);

// # Safety
// `op` must be a live handle; `out` must be writable.
enum AmStatus am_inertia(const struct AmOperator *op, double shift, struct AmInertia *out);

// `G(x, y; z)` for site indices `x`, `y`; `Im z` must be non-zero.
//
// # Safety
// `op` must be a live handle; `re` and `im` must be writable.
enum AmStatus am_greens_entry(const struct AmOperator *op,
                              size_t x,
                              size_t y,
                              double z_re,
                              double z_im,
                              double *re,
                              double *im);

// `Tr Im (H - z)^{-1}`.
//
// # Safety
// `op` must be a live handle; `out` must be writable.
enum AmStatus am_trace_im_resolvent(const struct AmOperator *op,
                                    double z_re,
                                    double z_im,
                                    double *out);

// Full ascending spectrum into `buf`. `written` receives the number of
// eigenvalues; when `cap` is too small nothing else is written and the
// call returns `AM_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `buf` must have room for `cap` values; `written` must be writable.
enum AmStatus am_dense_spectrum(const struct AmOperator *op,
                                double *buf,
                                size_t cap,
                                size_t *written);

// Smoothed indicator of `[a, b]` at `x` with Cauchy width `eps`.
//
// # Safety
// `out` must be writable.
enum AmStatus am_mollifier(double x, double eps, double a, double b, double *out);

// Poisson probability `P(N = n)` for mean `lambda`.
//
// # Safety
// `out` must be writable.
enum AmStatus am_poisson_pmf(double lambda, uint64_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANDERSON_MESO_H */
