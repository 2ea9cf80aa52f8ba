//! Finite-difference gradient suite over every loss and the student forward
//! pass, shared by the `gradcheck` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_diff_check_on, OpKind, Tape, Var};
use crate::error::Result;
use crate::losses::{
    bt_loss, cl_loss, kd_loss, EffectiveWeights, Standardization, DEFAULT_LAMBDA_CC,
    DEFAULT_LAMBDA_SC,
};
use crate::models::{EncoderConfig, HeadInit, StudentModel};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    /// random loss batches per objective
    pub cases: usize,
    pub step: f64,
    pub tol: f64,
    pub seed: u64,
    /// flip the sign of one backward rule, to confirm the suite notices
    pub sign_fault: Option<OpKind>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            cases: 20,
            step: 1e-6,
            tol: 1e-4,
            seed: 0x9bad,
            sign_fault: None,
        }
    }
}

/// Worst agreement seen for one objective across all cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveSummary {
    pub objective: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    /// `case N: param` for every failing parameter
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub objectives: Vec<ObjectiveSummary>,
    pub tol: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.objectives.iter().all(|o| o.passed)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .expect("length matches shape")
}

struct Tally {
    summary: ObjectiveSummary,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self {
            summary: ObjectiveSummary {
                objective: name.to_string(),
                cases: 0,
                max_rel_error: 0.0,
                passed: true,
                failures: Vec::new(),
            },
        }
    }

    fn check<F>(&mut self, cfg: &SuiteConfig, case: usize, names: &[String], params: &[Tensor], f: F) -> Result<()>
    where
        F: Fn(&Tape, &[Var]) -> Result<Var>,
    {
        let tape = match cfg.sign_fault {
            Some(kind) => Tape::with_sign_fault(kind),
            None => Tape::new(),
        };
        let r = finite_diff_check_on(tape, f, params, cfg.step, cfg.tol)?;
        let s = &mut self.summary;
        s.cases += 1;
        s.max_rel_error = s.max_rel_error.max(r.max_rel_error());
        for p in r.failures() {
            s.passed = false;
            s.failures.push(format!("case {case}: {} (rel error {:.3e})", names[p.index], p.max_rel_error));
        }
        Ok(())
    }
}

/// Check the correlation objective (total and each term), the distillation
/// loss, the Barlow Twins loss and the student forward pass.
pub fn gradient_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cl_names = ["cl", "cl.cc_diag", "cl.cc_offdiag", "cl.sc", "cl.cos"];
    let mut kd = Tally::new("kd");
    let mut bt = Tally::new("bt");
    let mut cl: Vec<Tally> = cl_names.iter().map(|n| Tally::new(n)).collect();
    let w = EffectiveWeights {
        gamma: 1.0,
        lambda_cc: DEFAULT_LAMBDA_CC,
        lambda_sc: DEFAULT_LAMBDA_SC,
        standardization: Standardization::Full,
    };
    let student = ["student".to_string()];
    let views = ["view1".to_string(), "view2".to_string()];

    for case in 0..cfg.cases {
        // at B = 2 full standardization maps every column to ±1, so the
        // correlation terms are locally constant and have no gradient to check
        let (b, p, t, d) = (rng.gen_range(3..=8), 3, rng.gen_range(1..=5), rng.gen_range(2..=16));
        let s = random_tensor(&mut rng, &[b, p, t, d]);
        let h = random_tensor(&mut rng, &[b, p, t, d]);

        kd.check(cfg, case, &student, std::slice::from_ref(&s), |tape, v| {
            kd_loss(tape, v[0], tape.constant(h.clone()), w.gamma)
        })?;
        for (k, tally) in cl.iter_mut().enumerate() {
            tally.check(cfg, case, &student, std::slice::from_ref(&s), |tape, v| {
                let terms = cl_loss(tape, v[0], tape.constant(h.clone()), w)?;
                Ok([terms.total, terms.cc_diag, terms.cc_offdiag, terms.sc, terms.cos][k])
            })?;
        }
        let y1 = random_tensor(&mut rng, &[b, d]);
        let y2 = random_tensor(&mut rng, &[b, d]);
        bt.check(cfg, case, &views, &[y1, y2], |tape, v| bt_loss(tape, v[0], v[1], 5e-3))?;
    }

    let mut forward = Tally::new("student_forward");
    let model = StudentModel::new(
        EncoderConfig {
            input_dim: 3,
            model_dim: 4,
            n_blocks: 2,
            n_heads: 2,
            mlp_dim: 6,
            seed: cfg.seed,
        },
        HeadInit::Uniform,
    )?;
    let x = random_tensor(&mut rng, &[2, 3, 3]);
    let probe = random_tensor(&mut rng, &[2, 3, 3, 4]);
    let named = model.params().named();
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let params: Vec<Tensor> = named.into_iter().map(|(_, t)| t.clone()).collect();
    forward.check(cfg, 0, &names, &params, |tape, vars| {
        let p = model.params().with_values(vars)?;
        let (_, preds) = model.forward_with(tape, &p, tape.constant(x.clone()))?;
        tape.sum(tape.mul(preds, tape.constant(probe.clone()))?)
    })?;

    let mut objectives = vec![kd.summary];
    objectives.extend(cl.into_iter().map(|t| t.summary));
    objectives.push(bt.summary);
    objectives.push(forward.summary);
    Ok(SuiteReport {
        objectives,
        tol: cfg.tol,
    })
}
