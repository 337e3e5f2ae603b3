//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use bnscore::dataset::Database;
use bnscore::gaussian::NormalWishartPriorSpec;
use bnscore::graph::Domain;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let (f1, f2) = (f(c - h * XGK[k]), f(c + h * XGK[k]));
        kronrod += WGK[k] * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Global adaptive Gauss–Kronrod over `[a, b]` to relative accuracy `rel`:
/// starts from `panels` equal pieces and keeps bisecting the piece with the
/// largest error estimate, up to a fixed budget.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, rel: f64) -> f64 {
    const MAX_PIECES: usize = 4000;
    let w = (b - a) / panels as f64;
    let mut pieces: Vec<(f64, f64, f64, f64)> = (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (est, err) = gk15(f, lo, hi);
            (lo, hi, est, err)
        })
        .collect();
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel * total.abs() || err == 0.0 || pieces.len() >= MAX_PIECES {
            return total;
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].3.total_cmp(&pieces[j].3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (est, err) = gk15(f, l, h);
            pieces.push((l, h, est, err));
        }
    }
}

/// `∫_ℝ f`, via `x = c + s·t/(1 − t²)` on `(−1, 1)`.
pub fn integrate_line(f: &dyn Fn(f64) -> f64, c: f64, s: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        f(c + s * t / d) * s * (1.0 + t * t) / (d * d)
    };
    integrate(&g, -1.0, 1.0, 16, tol)
}

/// `∫_0^∞ f(w) dw`, via `w = exp(u)` and [`integrate_line`] in `u`.
pub fn integrate_positive(f: &dyn Fn(f64) -> f64, log_center: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        let w = u.exp();
        if w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        f(w) * w
    };
    integrate_line(&g, log_center, 1.0, tol)
}

/// 1-D marginal likelihood `∫∫ Π_l n(x_l; μ, 1/w) p(μ, w) dμ dw` under the
/// normal–gamma prior `μ | w ~ n(μ₀, 1/(N'_μ w))`, `w ~ Gamma(N'_T/2, rate T₀/2)`.
pub fn normal_gamma_marginal(n_mu: f64, n_t: f64, t0: f64, mu0: f64, xs: &[f64]) -> f64 {
    use libm::lgamma;
    let ln_gamma_norm = 0.5 * n_t * (0.5 * t0).ln() - lgamma(0.5 * n_t);
    let m = xs.len() as f64;
    let center = (n_mu * mu0 + xs.iter().sum::<f64>()) / (n_mu + m);
    let two_pi = 2.0 * std::f64::consts::PI;
    let outer = |w: f64| {
        let ln_prior_w = ln_gamma_norm + (0.5 * n_t - 1.0) * w.ln() - 0.5 * t0 * w;
        let inner = |mu: f64| {
            let mut ln = 0.5 * (n_mu * w / two_pi).ln() - 0.5 * n_mu * w * (mu - mu0).powi(2);
            for &x in xs {
                ln += 0.5 * (w / two_pi).ln() - 0.5 * w * (x - mu).powi(2);
            }
            ln.exp()
        };
        let scale = 1.0 / ((n_mu + m) * w).sqrt();
        ln_prior_w.exp() * integrate_line(&inner, center, scale, 1e-13)
    };
    integrate_positive(&outer, (n_t / t0).ln(), 1e-13)
}

/// `|∂(θ_xy, θ_x̄y, θ_xȳ) / ∂(θ_x, θ_y|x, θ_y|x̄)|` by central differences.
pub fn two_variable_jacobian_fd(tx: f64, ty_x: f64, ty_nx: f64) -> f64 {
    let joint = |p: [f64; 3]| [p[0] * p[1], (1.0 - p[0]) * p[2], p[0] * (1.0 - p[1])];
    let base = [tx, ty_x, ty_nx];
    let h = 1e-6;
    let mut jac = DMatrix::zeros(3, 3);
    for c in 0..3 {
        let (mut up, mut dn) = (base, base);
        up[c] += h;
        dn[c] -= h;
        let (fu, fd) = (joint(up), joint(dn));
        for r in 0..3 {
            jac[(r, c)] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    jac.determinant().abs()
}

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * n as f64
}

pub fn random_nw_prior(rng: &mut impl Rng, n: usize) -> NormalWishartPriorSpec {
    NormalWishartPriorSpec::new(
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        rng.random_range(0.3..3.0),
        random_spd(rng, n),
        n as f64 - 1.0 + rng.random_range(0.2..4.0),
    )
    .unwrap()
}

pub fn random_reals(rng: &mut impl Rng, n: usize, m: usize) -> Database {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    Database::from_reals(Domain::continuous(n), &rows).unwrap()
}

pub fn random_states(rng: &mut impl Rng, domain: &Domain, m: usize) -> Database {
    let rows: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            (0..domain.len())
                .map(|i| rng.random_range(0..domain.variable(i).arity().unwrap()))
                .collect()
        })
        .collect();
    Database::from_states(domain.clone(), &rows).unwrap()
}
