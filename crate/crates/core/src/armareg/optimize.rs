//! Quasi-Newton minimisation with finite-difference gradients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Gradient sup-norm tolerance, relative to `max(1, |f|)`.
    pub grad_tol: f64,
    /// Gradient tolerance accepted when progress stalls.
    pub stall_grad_tol: f64,
    /// Relative objective change deemed a stall.
    pub stall_ftol: f64,
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            stall_grad_tol: 1e-3,
            stall_ftol: 1e-10,
            max_step: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Stalled,
    LineSearch,
    MaxIter,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub converged: bool,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Central-difference gradient.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], evals: &mut usize) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xt = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        xt[i] = x[i] + h;
        let fp = f(&xt);
        xt[i] = x[i] - h;
        let fm = f(&xt);
        xt[i] = x[i];
        *evals += 2;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimises `f`, which should return `+inf` outside its domain.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return BfgsResult {
            x,
            f: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            evaluations: evals,
            termination: Termination::NonFinite,
            converged: false,
        };
    }
    let mut g = numerical_gradient(&mut f, &x, &mut evals);
    let mut h = identity(n);
    let mut stalls = 0;
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let gn = sup_norm(&g);
        if !gn.is_finite() {
            termination = Termination::NonFinite;
            break;
        }
        if gn <= opts.grad_tol * fx.abs().max(1.0) {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let mut d = mat_vec(&h, &g).iter().map(|v| -v).collect::<Vec<_>>();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let dn = sup_norm(&d);
        let mut step = if dn > opts.max_step { opts.max_step / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fnew = f(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            termination = Termination::LineSearch;
            break;
        };
        let gnew = numerical_gradient(&mut f, &xn, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        if rel <= opts.stall_ftol {
            stalls += 1;
            if stalls >= 3 {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    let grad_norm = sup_norm(&g);
    let converged = match termination {
        Termination::Gradient => true,
        Termination::Stalled | Termination::LineSearch => grad_norm <= opts.stall_grad_tol * fx.abs().max(1.0),
        _ => false,
    };
    BfgsResult {
        x,
        f: fx,
        grad_norm,
        iterations,
        evaluations: evals,
        termination,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H ← (I − ρ s y') H (I − ρ y s') + ρ s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
