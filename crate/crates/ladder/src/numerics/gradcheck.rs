//! Finite-difference gradient verification.
//!
//! The checker rebuilds the loss from scratch for every probe, so the closure
//! must be deterministic; this is verified bitwise before any differencing.
//! Checks run in `f64`, where central differences with `h = 1e-5` leave
//! roughly ten significant digits of agreement for smooth functions.

use super::tape::{Tape, ValueId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default step for central differences.
pub const DEFAULT_H: f64 = 1e-5;

/// Default relative-error tolerance in 64-bit mode.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of parameter tensors checked.
    pub params_checked: usize,
    /// Number of scalar entries probed.
    pub entries_checked: usize,
    /// Largest relative error observed.
    pub max_rel_err: f64,
    /// Parameter name and flat entry index of the worst error.
    pub worst: Option<(String, usize)>,
    /// Tolerance the check was run with.
    pub tol: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

fn eval<F>(build: &F, params: &[(String, Tensor<f64>)]) -> Result<(Tape<f64>, Vec<ValueId>, ValueId)>
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> Result<ValueId>,
{
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = params.iter().map(|(_, t)| tape.param(t)).collect();
    let loss = build(&mut tape, &ids)?;
    let (r, c) = tape.value(loss).shape();
    if (r, c) != (1, 1) {
        return Err(Error::ShapeMismatch {
            op: "grad_check",
            detail: format!("loss must be 1x1, got {r}x{c}"),
        });
    }
    Ok((tape, ids, loss))
}

/// Compare analytic gradients of `build` against central finite differences.
///
/// `build` receives a fresh tape plus one registered param id per entry of
/// `params` (in order) and returns the scalar loss node. Every entry of every
/// parameter is probed at `theta +- h`.
pub fn grad_check<F>(
    build: F,
    params: &[(String, Tensor<f64>)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> Result<ValueId>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("grad_check: step h must be positive, got {h}")));
    }

    // Determinism gate: two builds must agree bitwise.
    let (tape_a, _, loss_a) = eval(&build, params)?;
    let (tape_b, _, loss_b) = eval(&build, params)?;
    let la = tape_a.value(loss_a).data()[0];
    let lb = tape_b.value(loss_b).data()[0];
    if la.to_bits() != lb.to_bits() {
        return Err(Error::NonDeterministic);
    }

    // Analytic gradients from one reverse sweep.
    let (mut tape, ids, loss) = eval(&build, params)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(params.iter())
        .map(|(&id, (_, t))| {
            tape.grad(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    // The error denominator is floored so that finite-difference roundoff on
    // near-zero gradients is not amplified into spurious failures. The floor
    // scales with the loss magnitude, the source of that roundoff.
    let floor = 1e-6 * la.abs().max(1.0);

    let mut report = GradCheckReport {
        params_checked: params.len(),
        entries_checked: 0,
        max_rel_err: 0.0,
        worst: None,
        tol,
    };

    let mut probe = params.to_vec();
    for (pi, (name, _)) in params.iter().enumerate() {
        for e in 0..params[pi].1.len() {
            let orig = probe[pi].1.data()[e];

            probe[pi].1.data_mut()[e] = orig + h;
            let (tp, _, lp) = eval(&build, &probe)?;
            let fp = tp.value(lp).data()[0];

            probe[pi].1.data_mut()[e] = orig - h;
            let (tm, _, lm) = eval(&build, &probe)?;
            let fm = tm.value(lm).data()[0];

            probe[pi].1.data_mut()[e] = orig;

            let fd = (fp - fm) / (2.0 * h);
            let an = analytic[pi][e];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(floor);
            report.entries_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), e));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    fn random_tensor(rng: &mut RngStream, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
        let mut data = vec![0.0f64; rows * cols];
        for v in data.iter_mut() {
            let u = rng.uniform_below(1 << 24) as f64 / (1u64 << 24) as f64;
            *v = lo + (hi - lo) * u;
        }
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn passes_on_a_known_smooth_function() {
        // loss = mean((x*y + sigmoid(x))^2)
        let x = Tensor::new(2, 3, vec![0.3, -0.7, 1.2, 0.9, -0.2, 0.4]).unwrap();
        let y = Tensor::new(2, 3, vec![1.1, 0.5, -0.8, 0.2, 1.4, -0.3]).unwrap();
        let report = grad_check(
            |tape, ids| {
                let xy = tape.mul(ids[0], ids[1])?;
                let s = tape.sigmoid(ids[0])?;
                let sum = tape.add(xy, s)?;
                let sq = tape.mul(sum, sum)?;
                tape.mean_all(sq)
            },
            &[("x".into(), x), ("y".into(), y)],
            DEFAULT_H,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(report.pass(), "max_rel_err {} at {:?}", report.max_rel_err, report.worst);
        assert_eq!(report.entries_checked, 12);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // scale(x, 3) forward with sum loss has gradient 3 everywhere; probing
        // against a deliberately different function exposes disagreement.
        // Here we simulate a broken rule by checking d(sum(3x))/dx against
        // finite differences of sum(2x): the closure itself differs from what
        // the analytic pass saw, which grad_check cannot distinguish from a
        // broken backward rule, so instead assert a genuinely failing setup:
        // compare analytic grad of |x| surrogate (relu(x) - relu(-x)) at a
        // kink location, where FD straddles the kink.
        let x = Tensor::new(1, 1, vec![0.0]).unwrap();
        let report = grad_check(
            |tape, ids| {
                let r = tape.relu(ids[0])?;
                tape.sum_all(r)
            },
            &[("x".into(), x)],
            DEFAULT_H,
            DEFAULT_TOL,
        )
        .unwrap();
        // relu'(0) = 0 analytically, FD gives 0.5: the report must flag it.
        assert!(!report.pass(), "kink at 0 should produce a visible mismatch");
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::new(1, 1, vec![1.0]).unwrap();
        let r = grad_check(|tape, ids| tape.sum_all(ids[0]), &[("x".into(), x)], 0.0, 1e-4);
        assert!(r.is_err());
    }

    /// Every differentiable tape op agrees with central differences on random
    /// small shapes, across 100 seeded trials. Inputs for ops with kinks or
    /// poles are drawn away from the singular set so the FD probe is valid.
    #[test]
    fn every_op_matches_finite_differences_over_100_trials() {
        let mut worst = 0.0f64;
        let mut worst_desc = String::new();
        for trial in 0..100u64 {
            let mut rng = RngStream::new(2024).substream(&format!("gradcheck/trial{trial}"));
            let m = 1 + rng.uniform_below(4) as usize;
            let k = 1 + rng.uniform_below(4) as usize;
            let n = 1 + rng.uniform_below(4) as usize;

            let a = random_tensor(&mut rng, m, k, -2.0, 2.0);
            let b = random_tensor(&mut rng, m, k, -2.0, 2.0);
            let bk = random_tensor(&mut rng, k, n, -2.0, 2.0);
            let row = {
                // Magnitudes in [0.5, 1.5] with random sign: safe for div_row.
                let mut t = random_tensor(&mut rng, 1, k, 0.5, 1.5);
                for v in t.data_mut() {
                    if rng.uniform_below(2) == 1 {
                        *v = -*v;
                    }
                }
                t
            };
            let pos = random_tensor(&mut rng, m, k, 0.5, 2.5);
            let scalar = random_tensor(&mut rng, 1, 1, 0.5, 1.5);
            let weight = random_tensor(&mut rng, m, k, -1.0, 1.0);
            let weight_mn = random_tensor(&mut rng, m, n, -1.0, 1.0);
            let targets: Vec<usize> = (0..m).map(|_| rng.uniform_below(k as u64) as usize).collect();

            type Build = Box<dyn Fn(&mut Tape<f64>, &[ValueId]) -> crate::error::Result<ValueId>>;
            let weight_c = weight.clone();
            let weight_mn_c = weight_mn.clone();
            let targets_c = targets.clone();
            let cases: Vec<(&str, Vec<(String, Tensor<f64>)>, Build)> = vec![
                (
                    "matmul",
                    vec![("a".into(), a.clone()), ("b".into(), bk.clone())],
                    Box::new(move |t, ids| {
                        let mmc = t.leaf(weight_mn_c.clone());
                        let p = t.matmul(ids[0], ids[1])?;
                        let w = t.mul(p, mmc)?;
                        t.mean_all(w)
                    }),
                ),
                (
                    "add_sub_mul_scale",
                    vec![("a".into(), a.clone()), ("b".into(), b.clone())],
                    Box::new(|t, ids| {
                        let s = t.add(ids[0], ids[1])?;
                        let d = t.sub(s, ids[1])?;
                        let p = t.mul(d, ids[1])?;
                        let sc = t.scale(p, -1.7)?;
                        t.mean_all(sc)
                    }),
                ),
                (
                    "row_ops",
                    vec![("a".into(), a.clone()), ("row".into(), row.clone())],
                    Box::new(|t, ids| {
                        let x1 = t.add_row(ids[0], ids[1])?;
                        let x2 = t.sub_row(x1, ids[1])?;
                        let x3 = t.mul_row(x2, ids[1])?;
                        let x4 = t.div_row(x3, ids[1])?;
                        let sq = t.mul(x4, x4)?;
                        t.mean_all(sq)
                    }),
                ),
                (
                    "reductions",
                    vec![("a".into(), a.clone())],
                    Box::new(|t, ids| {
                        let mr = t.mean_rows(ids[0])?;
                        let sq = t.mul(mr, mr)?;
                        let s1 = t.sum_all(sq)?;
                        let m1 = t.mean_all(ids[0])?;
                        let mm = t.mul(m1, m1)?;
                        t.add(s1, mm)
                    }),
                ),
                (
                    "sigmoid_softmax",
                    vec![("a".into(), a.clone())],
                    Box::new(move |t, ids| {
                        let wc = t.leaf(weight_c.clone());
                        let sg = t.sigmoid(ids[0])?;
                        let sm = t.softmax(sg)?;
                        let w = t.mul(sm, wc)?;
                        t.mean_all(w)
                    }),
                ),
                (
                    "relu_lrelu",
                    vec![("a".into(), a.clone())],
                    Box::new(|t, ids| {
                        let r = t.relu(ids[0])?;
                        let l = t.lrelu(ids[0], 0.1)?;
                        let s = t.add(r, l)?;
                        let sq = t.mul(s, s)?;
                        t.mean_all(sq)
                    }),
                ),
                (
                    "sqrt_clamp",
                    vec![("p".into(), pos.clone())],
                    Box::new(|t, ids| {
                        let s = t.sqrt(ids[0])?;
                        let c = t.clamp(s, 1e-8, f64::INFINITY)?;
                        let q = t.mul(c, c)?;
                        t.mean_all(q)
                    }),
                ),
                (
                    "entry_scalar_ops",
                    vec![("a".into(), a.clone()), ("s".into(), scalar.clone())],
                    Box::new(|t, ids| {
                        let e = t.entry(ids[0], 0, 0)?;
                        let m1 = t.mul_scalar(ids[0], e)?;
                        let m2 = t.mul_scalar(m1, ids[1])?;
                        let m3 = t.add_scalar(m2, ids[1])?;
                        t.mean_all(m3)
                    }),
                ),
                (
                    "softmax_cross_entropy",
                    vec![("logits".into(), a.clone())],
                    Box::new(move |t, ids| {
                        let sm = t.softmax(ids[0])?;
                        t.cross_entropy_mean(sm, &targets_c)
                    }),
                ),
            ];

            for (name, params, build) in cases {
                let report = grad_check(&build, &params, DEFAULT_H, DEFAULT_TOL)
                    .unwrap_or_else(|e| panic!("trial {trial} case {name}: {e}"));
                if report.max_rel_err > worst {
                    worst = report.max_rel_err;
                    worst_desc = format!("trial {trial} case {name} at {:?}", report.worst);
                }
                assert!(
                    report.pass(),
                    "trial {trial} case {name}: max_rel_err {} at {:?}",
                    report.max_rel_err,
                    report.worst
                );
            }
        }
        // Overall agreement should be far below the tolerance, not borderline.
        assert!(worst < 1e-4, "worst-case rel err {worst} ({worst_desc})");
    }
}
