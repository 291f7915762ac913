//! Sturm-sequence inertia of symmetric tridiagonal matrices with constant
//! off-diagonal.
//!
//! The pivots of `T - sI` obey `q_0 = d_0 - s`, `q_i = d_i - s - t²/q_{i-1}`;
//! the number of negative pivots is the number of eigenvalues below `s`.
//! Several shifts are swept together (sites outer, shifts inner) so the
//! divisions of independent recurrences overlap.

/// Raw outcome of one sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Sweep {
    pub negative: usize,
    /// Last pivot is exactly zero: the shift is an eigenvalue.
    pub last_zero: bool,
    /// An interior pivot vanished; the count is unreliable.
    pub breakdown: bool,
}

pub(crate) fn sweep_lanes<const N: usize>(diag: &[f64], t2: f64, shifts: [f64; N]) -> [Sweep; N] {
    let n = diag.len();
    let mut out = [Sweep {
        negative: 0,
        last_zero: false,
        breakdown: false,
    }; N];
    if n == 0 {
        return out;
    }
    let mut q = [0.0f64; N];
    let mut neg = [0usize; N];
    let mut bad = [false; N];
    for l in 0..N {
        q[l] = diag[0] - shifts[l];
        neg[l] = (q[l] < 0.0) as usize;
    }
    for &d in &diag[1..] {
        for l in 0..N {
            bad[l] |= q[l] == 0.0;
            q[l] = d - shifts[l] - t2 / q[l];
            neg[l] += (q[l] < 0.0) as usize;
        }
    }
    for l in 0..N {
        out[l] = Sweep {
            negative: neg[l],
            last_zero: q[l] == 0.0,
            breakdown: bad[l] || q[l].is_nan(),
        };
    }
    out
}

pub(crate) fn sweep(diag: &[f64], t2: f64, shift: f64) -> Sweep {
    sweep_lanes::<1>(diag, t2, [shift])[0]
}

/// Sweep many shifts, eight at a time.
pub(crate) fn sweep_many(diag: &[f64], t2: f64, shifts: &[f64]) -> Vec<Sweep> {
    const LANES: usize = 8;
    let mut out = Vec::with_capacity(shifts.len());
    for chunk in shifts.chunks(LANES) {
        let mut lanes = [chunk[chunk.len() - 1]; LANES];
        lanes[..chunk.len()].copy_from_slice(chunk);
        out.extend_from_slice(&sweep_lanes(diag, t2, lanes)[..chunk.len()]);
    }
    out
}
