use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Scores are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

/// Lower bound applied to GR probabilities before the log.
const PROB_FLOOR: f64 = 1e-12;

fn constant(tape: &mut Tape, value: f64) -> Var {
    tape.input(Tensor::scalar(value))
}

/// Negative log-likelihood of a binary label.
pub fn loss_binary(tape: &mut Tape, y: u8, y_hat: Var) -> Result<Var> {
    if y > 1 {
        return Err(Error::InvalidInput(format!(
            "binary label must be 0 or 1, got {y}"
        )));
    }
    let p = tape.clamp(y_hat, SCORE_EPS, 1.0 - SCORE_EPS)?;
    let p = match y {
        1 => p,
        _ => {
            let neg = tape.scale(p, -1.0)?;
            tape.shift(neg, 1.0)?
        }
    };
    let log = tape.log(p)?;
    let nll = tape.scale(log, -1.0)?;
    tape.sum(nll)
}

/// Mean squared error against a one-hot target.
pub fn loss_multiclass(tape: &mut Tape, y: &[f64], y_hat: Var) -> Result<Var> {
    let n = tape.value(y_hat).len();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones != 1 || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("target {y:?} is not one-hot")));
    }
    let target = tape.input(Tensor::new(tape.value(y_hat).shape().to_vec(), y.to_vec())?);
    let diff = tape.sub(y_hat, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// `-Σ log P(gold)` over the words whose gold class is known. Words with
/// `None` are masked out; when every word is masked the loss is zero.
pub fn loss_gr(tape: &mut Tape, gold: &[Option<usize>], pred: &[Var]) -> Result<Var> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut terms = Vec::new();
    for (&g, &p) in gold.iter().zip(pred) {
        let Some(g) = g else { continue };
        let classes = tape.value(p).len();
        if g >= classes {
            return Err(Error::InvalidInput(format!(
                "gold GR class {g} outside a vocabulary of {classes}"
            )));
        }
        let prob = tape.pick(p, g)?;
        let prob = tape.clamp(prob, PROB_FLOOR, 1.0)?;
        terms.push(tape.log(prob)?);
    }
    if terms.is_empty() {
        log::warn!("every word is masked; GR loss is zero");
        return Ok(constant(tape, 0.0));
    }
    let logs = tape.concat(&terms)?;
    let total = tape.sum(logs)?;
    tape.scale(total, -1.0)
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    for (field, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config(field, format!("{v} is not in [0, 1]")));
        }
    }
    Ok(())
}

/// `α·L1 + β·L2`; without an L2 term only `α·L1` is recorded.
pub fn loss_total(tape: &mut Tape, l1: Var, l2: Option<Var>, alpha: f64, beta: f64) -> Result<Var> {
    check_weights(alpha, beta)?;
    let main = tape.scale(l1, alpha)?;
    match l2 {
        Some(l2) => {
            let aux = tape.scale(l2, beta)?;
            tape.add(main, aux)
        }
        None => Ok(main),
    }
}

/// Plain-number form of [`loss_total`].
pub fn combine_losses(l1: f64, l2: Option<f64>, alpha: f64, beta: f64) -> Result<f64> {
    check_weights(alpha, beta)?;
    Ok(match l2 {
        Some(l2) => alpha * l1 + beta * l2,
        None => alpha * l1,
    })
}
