//! Finite-dimensional ℓʳ norms and their duality maps.
//!
//! The inner value space of every grid function is `(ℝᵐ, ℓʳ)`; its dual is
//! `(ℝᵐ, ℓʳ')` under the coordinate pairing.

/// Conjugate exponent `r'` with `1/r + 1/r' = 1`.
pub fn dual_exponent(r: f64) -> f64 {
    if r == 1.0 {
        f64::INFINITY
    } else if r.is_infinite() {
        1.0
    } else {
        r / (r - 1.0)
    }
}

/// Exponent as text, `inf` for `∞`, so reports stay valid JSON.
pub fn format_exponent(r: f64) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        format!("{r}")
    }
}

pub fn lr_norm(v: &[f64], r: f64) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0].abs(),
        _ if r.is_infinite() => v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
        _ if r == 1.0 => v.iter().map(|x| x.abs()).sum(),
        _ if r == 2.0 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        _ => {
            let scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            scale * v.iter().map(|x| (x.abs() / scale).powf(r)).sum::<f64>().powf(1.0 / r)
        }
    }
}

fn sign_plus(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Writes into `out` a norming functional `J(v)` of `v ∈ ℓʳ`: `‖J(v)‖_{r'} = 1` and
/// `⟨v, J(v)⟩ = ‖v‖_r`. Ties resolve toward `+1`; `J(0) := J(1,…,1)`.
pub fn duality_map(v: &[f64], r: f64, out: &mut [f64]) {
    debug_assert_eq!(v.len(), out.len());
    let m = v.len();
    if m == 1 {
        out[0] = sign_plus(v[0]);
        return;
    }
    let norm = lr_norm(v, r);
    if norm == 0.0 {
        let ones = vec![1.0; m];
        duality_map(&ones, r, out);
        return;
    }
    if r == 1.0 {
        for (o, x) in out.iter_mut().zip(v) {
            *o = sign_plus(*x);
        }
    } else if r.is_infinite() {
        let mut best = 0;
        for (k, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = k;
            }
        }
        out.fill(0.0);
        out[best] = sign_plus(v[best]);
    } else {
        for (o, x) in out.iter_mut().zip(v) {
            *o = sign_plus(*x) * (x.abs() / norm).powf(r - 1.0);
        }
    }
}
