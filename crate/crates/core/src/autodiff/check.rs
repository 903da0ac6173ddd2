use alloc::string::String;
use alloc::vec::Vec;

use super::{AutodiffError, Bound, ParameterSet, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Added to the denominator of the relative error.
    pub eps: f64,
    /// Probe at most this many evenly spaced entries of each parameter.
    pub max_probes_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            eps: 1e-6,
            max_probes_per_param: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `max |analytic - central| / (|central| + eps)` over probed entries.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// The program hit a kink (max tie, relu/abs at zero) at the base point.
    pub nonsmooth: bool,
    pub probes: usize,
}

fn probe_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|i| i * len / m).collect(),
        _ => (0..len).collect(),
    }
}

fn eval<F>(params: &ParameterSet, program: &F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = program(&mut tape, &bound)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(AutodiffError::NotScalar { shape: v.shape().to_vec() });
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of a scalar program against central
/// finite differences over every trainable parameter.
pub fn finite_diff_check<F>(
    params: &ParameterSet,
    opts: GradCheckOptions,
    program: F,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var, AutodiffError>,
{
    if !(opts.step > 0.0) {
        return Err(AutodiffError::InvalidArgument {
            op: "finite_diff_check",
            reason: "step must be positive",
        });
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = program(&mut tape, &bound)?;
    let nonsmooth = tape.nonsmooth_events() > 0;
    let grads = tape.backward(out)?;

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        nonsmooth,
        probes: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let p = params.param(id);
        if !p.trainable {
            continue;
        }
        let analytic = grads.get(bound.var(id)).map(|g| g.data().to_vec());
        for i in probe_indices(p.value.len(), opts.max_probes_per_param) {
            let x0 = p.value.data()[i];
            work.value_mut(id).data_mut()[i] = x0 + opts.step;
            let fp = eval(&work, &program)?;
            work.value_mut(id).data_mut()[i] = x0 - opts.step;
            let fm = eval(&work, &program)?;
            work.value_mut(id).data_mut()[i] = x0;
            let central = (fp - fm) / (2.0 * opts.step);
            let a = analytic.as_ref().map_or(0.0, |g| g[i]);
            let err = (a - central).abs() / (central.abs() + opts.eps);
            report.probes += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((p.name.clone(), i));
                }
            }
        }
    }
    Ok(report)
}
