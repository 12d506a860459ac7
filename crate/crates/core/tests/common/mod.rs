//! Time-domain oracles evaluated by adaptive Gauss–Kronrod quadrature.
#![allow(dead_code, clippy::excessive_precision)]

use cpmarkov::{CMatrix, C64};

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

struct Panel {
    a: f64,
    b: f64,
    value: Vec<C64>,
    err: f64,
}

fn gk15(f: &dyn Fn(f64) -> Vec<C64>, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let f0 = f(c);
    let n = f0.len();
    let mut k: Vec<C64> = f0.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<C64> = f0.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let x = h * XGK[j];
        let (fl, fr) = (f(c - x), f(c + x));
        for i in 0..n {
            let s = fl[i] + fr[i];
            k[i] += s * WGK[j];
            if j % 2 == 1 {
                g[i] += s * WG[j / 2];
            }
        }
    }
    let err = k
        .iter()
        .zip(&g)
        .map(|(x, y)| (x - y).norm() * h)
        .fold(0.0, f64::max);
    Panel {
        a,
        b,
        value: k.into_iter().map(|v| v * h).collect(),
        err,
    }
}

/// Adaptive integral of a vector-valued function; returns the value and the
/// achieved error estimate.
pub fn integrate(f: &dyn Fn(f64) -> Vec<C64>, a: f64, b: f64, tol: f64) -> (Vec<C64>, f64) {
    let n0 = 16;
    let mut panels: Vec<Panel> = (0..n0)
        .map(|k| {
            let lo = a + (b - a) * k as f64 / n0 as f64;
            let hi = a + (b - a) * (k + 1) as f64 / n0 as f64;
            gk15(f, lo, hi)
        })
        .collect();
    for _ in 0..20_000 {
        let total: f64 = panels.iter().map(|p| p.err).sum();
        if total <= tol {
            break;
        }
        let worst = (0..panels.len())
            .max_by(|&i, &j| panels[i].err.total_cmp(&panels[j].err))
            .unwrap();
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(gk15(f, p.a, mid));
        panels.push(gk15(f, mid, p.b));
    }
    let n = panels[0].value.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for p in &panels {
        for (o, v) in out.iter_mut().zip(&p.value) {
            *o += v;
        }
    }
    (out, panels.iter().map(|p| p.err).sum())
}

fn flat(m: &CMatrix) -> Vec<C64> {
    m.iter().copied().collect()
}

fn unflat(v: &[C64], n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v)
}

fn expi(h: &CMatrix, t: f64) -> CMatrix {
    (h * C64::new(0.0, t)).exp()
}

/// `e^{−iH₀t} H' e^{iH₀t}`.
pub fn interaction_picture(h0: &CMatrix, hp: &CMatrix, t: f64) -> CMatrix {
    expi(h0, -t) * hp * expi(h0, t)
}

/// `e^{iH₀t} H' e^{−iH₀t}`, the coupling seen by `U_{−t} A U_t`.
pub fn heisenberg(h0: &CMatrix, hp: &CMatrix, t: f64) -> CMatrix {
    interaction_picture(h0, hp, -t)
}

/// Column-stacking matrix of `X ↦ −i[H, X]`.
pub fn adjoint_action(h: &CMatrix) -> CMatrix {
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    (id.kronecker(h) - h.transpose().kronecker(&id)) * C64::new(0.0, -1.0)
}

/// Matrix of `X ↦ e^{−iH₀t} X e^{iH₀t}`.
pub fn free_propagator(h0: &CMatrix, t: f64) -> CMatrix {
    let u = expi(h0, -t);
    u.conjugate().kronecker(&u)
}

fn gauss(t: f64, width: f64) -> f64 {
    (-t * t / (2.0 * width * width)).exp()
}

pub fn smoothed_interaction(h0: &CMatrix, hp: &CMatrix, big_t: f64, tol: f64) -> CMatrix {
    let d = h0.nrows();
    let f = |t: f64| flat(&(interaction_picture(h0, hp, t) * C64::new(gauss(t, big_t), 0.0)));
    let (v, _) = integrate(&f, -8.0 * big_t, 8.0 * big_t, tol);
    let pref = (2.0 * std::f64::consts::PI.sqrt() * big_t).powf(-0.5);
    unflat(&v, d) * C64::new(pref, 0.0)
}

/// `∫_{lo}^{hi} dt₁ g(t₁) X(t₁) ∫_{lo}^{t₁} dt₂ g(t₂) Y(t₂)` for matrix-valued
/// `X`, `Y`, with products taken as `combine(X, ∫Y)`.
fn ordered_double(
    x: &dyn Fn(f64) -> CMatrix,
    y: &dyn Fn(f64) -> CMatrix,
    combine: &dyn Fn(&CMatrix, &CMatrix) -> CMatrix,
    lo: f64,
    hi: f64,
    width: f64,
    tol: f64,
) -> CMatrix {
    let n = x(0.0).nrows();
    let inner = |t1: f64| -> CMatrix {
        if t1 <= lo {
            return CMatrix::zeros(n, n);
        }
        let g = |t2: f64| flat(&(y(t2) * C64::new(gauss(t2, width), 0.0)));
        unflat(&integrate(&g, lo, t1, tol * 0.1).0, n)
    };
    let outer = |t1: f64| flat(&(combine(&x(t1), &inner(t1)) * C64::new(gauss(t1, width), 0.0)));
    unflat(&integrate(&outer, lo, hi, tol).0, n)
}

pub fn second_order_hamiltonian(h0: &CMatrix, hp: &CMatrix, big_t: f64, tol: f64) -> CMatrix {
    let h = |t: f64| interaction_picture(h0, hp, t);
    let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
    let r = 8.0 * big_t;
    let v = ordered_double(&h, &h, &comm, -r, r, big_t, tol);
    v * C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI.sqrt() * big_t))
}

/// `(1/√πT) ∬_{t₂<t₁} e^{−(t₁²+t₂²)/2T²} A(t₁) A(t₂)`, i.e. the signed double
/// commutator `−[H(t₁), [H(t₂), ·]]` with `A(t) = U_{−t} A U_t`.
pub fn double_commutator(h0: &CMatrix, hp: &CMatrix, big_t: f64, tol: f64) -> CMatrix {
    let a = |t: f64| adjoint_action(&heisenberg(h0, hp, t));
    let prod = |x: &CMatrix, y: &CMatrix| x * y;
    let r = 8.0 * big_t;
    let v = ordered_double(&a, &a, &prod, -r, r, big_t, tol);
    v * C64::new(1.0 / (std::f64::consts::PI.sqrt() * big_t), 0.0)
}

/// `∫₀^∞ e^{−(x/2)²/T²} A(x/2) A(−x/2) dx`.
pub fn smoothed_half_line(h0: &CMatrix, hp: &CMatrix, big_t: f64, tol: f64) -> CMatrix {
    let n = h0.nrows() * h0.nrows();
    let f = |x: f64| {
        let a1 = adjoint_action(&heisenberg(h0, hp, x / 2.0));
        let a2 = adjoint_action(&heisenberg(h0, hp, -x / 2.0));
        flat(&(a1 * a2 * C64::new((-(x * x) / (4.0 * big_t * big_t)).exp(), 0.0)))
    };
    unflat(&integrate(&f, 0.0, 16.0 * big_t, tol).0, n)
}

/// `∫₀^∞ e^{−εx} U_{−x} A₀₁ U_x A₁₀ dx` with `p0` the projection matrix.
pub fn damped_davies(h0: &CMatrix, hp: &CMatrix, p0: &CMatrix, eps: f64, tol: f64) -> CMatrix {
    let n = p0.nrows();
    let p1 = CMatrix::identity(n, n) - p0;
    let a = adjoint_action(hp);
    let a01 = p0 * &a * &p1;
    let a10 = &p1 * &a * p0;
    let f = |x: f64| {
        let m = free_propagator(h0, -x) * &a01 * free_propagator(h0, x) * &a10;
        flat(&(m * C64::new((-eps * x).exp(), 0.0)))
    };
    unflat(&integrate(&f, 0.0, 36.0 / eps, tol).0, n)
}

/// `(1/√πT) ∫ e^{−q²/T²} U_{−q} K U_q dq`.
pub fn gaussian_average(k: &CMatrix, h0: &CMatrix, big_t: f64, tol: f64) -> CMatrix {
    let n = k.nrows();
    let f = |q: f64| {
        let m = free_propagator(h0, -q) * k * free_propagator(h0, q);
        flat(&(m * C64::new((-(q * q) / (big_t * big_t)).exp(), 0.0)))
    };
    let (v, _) = integrate(&f, -6.0 * big_t, 6.0 * big_t, tol);
    unflat(&v, n) * C64::new(1.0 / (std::f64::consts::PI.sqrt() * big_t), 0.0)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}
