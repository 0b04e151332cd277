use std::io::Write;
use std::path::Path;

use super::model::{AlignSample, PreparedSample, ToyModel};
use super::{AlignConfig, LossBreakdown};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// Loss before each step; `trajectory[k]` is measured at the start of epoch `k`.
    pub trajectory: Vec<LossBreakdown>,
}

/// Plain fixed-step descent. Coordinates whose `mask` entry is `false` are
/// never updated. Returns the loss measured before each step.
pub fn gradient_descent<F>(
    params: &mut [f64],
    mask: Option<&[bool]>,
    learning_rate: f64,
    steps: usize,
    mut eval: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if let Some(m) = mask {
        if m.len() != params.len() {
            return Err(Error::Dimension(format!(
                "mask has {} entries for {} parameters",
                m.len(),
                params.len()
            )));
        }
    }
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let (loss, grad) = eval(params)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "step {step}: loss {loss}, {} non-finite gradient entries",
                grad.iter().filter(|g| !g.is_finite()).count()
            )));
        }
        losses.push(loss);
        for (i, (p, g)) in params.iter_mut().zip(&grad).enumerate() {
            if mask.is_none_or(|m| m[i]) {
                *p -= learning_rate * g;
            }
        }
    }
    Ok(losses)
}

/// Full-batch descent on the event encoder and decoder; the image encoder
/// stays frozen.
pub fn train_toy(dataset: &[AlignSample], init: ToyModel, config: &AlignConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let prepared: Vec<PreparedSample> = dataset.iter().map(AlignSample::prepare).collect();
    let mask = init.trainable_mask();
    let mut flat = init.to_flat();
    let mut scratch = init;
    let mut trajectory = Vec::with_capacity(config.epochs);
    gradient_descent(&mut flat, Some(&mask), config.learning_rate, config.epochs, |p| {
        scratch.set_flat(p)?;
        let (breakdown, grad) = scratch.loss_and_grad(&prepared, config)?;
        trajectory.push(breakdown);
        Ok((breakdown.total, grad))
    })?;
    scratch.set_flat(&flat)?;
    Ok(TrainOutcome {
        model: scratch,
        trajectory,
    })
}

pub fn write_trajectory_csv<W: Write>(trajectory: &[LossBreakdown], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,l_ev_t,l_ev_im_t,l_c,total")?;
    for (epoch, b) in trajectory.iter().enumerate() {
        writeln!(out, "{epoch},{},{},{},{}", b.l_ev_t, b.l_ev_im_t, b.l_c, b.total)?;
    }
    Ok(())
}

/// Convenience wrapper writing the CSV to a file.
pub fn save_trajectory_csv(trajectory: &[LossBreakdown], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory_csv(trajectory, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
