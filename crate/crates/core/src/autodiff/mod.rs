//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records primitives as they are evaluated; [`Tape::backward`]
//! propagates the adjoint of a scalar output back to every differentiable
//! leaf. Complex quantities are carried as pairs of real tensors.
//!
//! ```
//! use isingarray_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.variable(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y).item(), 9.0);
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use alloc::string::String;
use alloc::vec::Vec;

mod check;
mod params;
mod tape;
mod tensor;

pub use check::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use params::{Bound, ParamId, Parameter, ParameterSet};
pub use tape::{Gradients, Tape, Var, GATHER_ZERO};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: &'static str },
    #[error("backward requires a one-element output, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grad_of(f: impl Fn(&mut Tape, Var) -> Var, x: f64) -> f64 {
        let mut tape = Tape::new();
        let v = tape.variable(Tensor::scalar(x));
        let y = f(&mut tape, v);
        tape.backward(y).unwrap().get(v).unwrap().item()
    }

    #[test]
    fn square_at_three() {
        assert_eq!(grad_of(|t, x| t.mul(x, x).unwrap(), 3.0), 6.0);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        assert_eq!(grad_of(|t, x| t.sigmoid(x), 0.0), 0.25);
    }

    #[test]
    fn tanh_chain_rule() {
        let g = grad_of(
            |t, x| {
                let s = t.scale(x, 3.0);
                t.tanh(s)
            },
            0.0,
        );
        assert_eq!(g, 3.0);
    }

    #[test]
    fn linear_loss_gives_ones() {
        let mut tape = Tape::new();
        let w = tape.variable(Tensor::filled(&[2, 2], 1.0));
        let x = tape.constant(Tensor::filled(&[2, 1], 1.0));
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0; 4]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn unreachable_parameter_gets_zero() {
        let mut params = ParameterSet::new();
        let w = params.insert("w", Tensor::filled(&[2, 2], 0.5)).unwrap();
        let c = params.insert("c", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = tape.scale(bound.var(c), 4.0);
        params.backward(&tape, loss, &bound).unwrap();
        assert_eq!(params.param(w).grad.as_ref().unwrap().data(), &[0.0; 4]);
        assert_eq!(params.param(c).grad.as_ref().unwrap().item(), 4.0);
    }

    #[test]
    fn frozen_inputs_untouched() {
        let mut params = ParameterSet::new();
        let w = params.insert_frozen("w", Tensor::filled(&[3], 1.0)).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let s = tape.sum(bound.var(w));
        params.backward(&tape, s, &bound).unwrap();
        assert!(params.param(w).grad.is_none());
        assert_eq!(params.value(w).data(), &[1.0; 3]);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(AutodiffError::NotScalar { .. })));
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let mut tape = Tape::new();
        let a = tape.variable(Tensor::zeros(&[2, 3]));
        let b = tape.variable(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(AutodiffError::ShapeMismatch { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("unexpected {other:?}"),
        }
        let c = tape.variable(Tensor::zeros(&[4]));
        match tape.add(a, c) {
            Err(AutodiffError::ShapeMismatch { op, .. }) => assert_eq!(op, "add"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_denominator_rejected() {
        let mut tape = Tape::new();
        let a = tape.variable(Tensor::filled(&[2], 1.0));
        let b = tape.constant(Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap());
        assert!(tape.div(a, b).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut params = ParameterSet::new();
        params.insert("theta", Tensor::scalar(0.0)).unwrap();
        assert!(params.insert("theta", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn quadratic_form_check_is_tight() {
        let mut params = ParameterSet::new();
        let id = params
            .insert("x", Tensor::from_vec(&[3, 1], vec![0.3, -1.2, 2.0]).unwrap())
            .unwrap();
        let a = Tensor::from_vec(&[3, 3], vec![2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 3.0]).unwrap();
        let report = finite_diff_check(&params, GradCheckOptions::default(), |t, b| {
            let x = b.var(id);
            let av = t.constant(a.clone());
            let ax = t.matmul(av, x)?;
            let q = t.mul(x, ax)?;
            Ok(t.sum(q))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert!(!report.nonsmooth);
    }

    #[test]
    fn max_tie_flagged_nonsmooth() {
        let mut params = ParameterSet::new();
        let id = params.insert("x", Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 0.2]).unwrap()).unwrap();
        let report = finite_diff_check(&params, GradCheckOptions::default(), |t, b| {
            let m = t.max_last(b.var(id))?;
            Ok(t.sum(m))
        })
        .unwrap();
        assert!(report.nonsmooth);
    }

    #[test]
    fn repeated_backward_identical() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_vec(&[1, 3], vec![0.1, -0.4, 0.7]).unwrap());
        let s = tape.sigmoid(x);
        let t2 = tape.tanh(s);
        let y = tape.sum(t2);
        let g1 = tape.backward(y).unwrap().get(x).unwrap().clone();
        let g2 = tape.backward(y).unwrap().get(x).unwrap().clone();
        assert_eq!(g1, g2);
    }
}
