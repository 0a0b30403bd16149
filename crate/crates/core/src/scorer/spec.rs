use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use super::trace::load_traces;
use super::{
    ConstantScorer, EventTime, NoisyRampScorer, RampScorer, ReplayScorer, Scorer, ScorerError, SubprocessScorer,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("scorer spec `{spec}`: {message}")]
    Parse { spec: String, message: String },
    #[error(transparent)]
    Trace(#[from] super::TraceError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Textual scorer selection, as given on the command line.
///
/// ```text
/// constant:0.3
/// ramp[:event=6.0|clip,rise=2.0]
/// noisy-ramp[:seed=7,sigma=0.1,event=clip,rise=2.0]
/// replay:<trace file or directory>
/// subprocess:<shell command>
/// subprocess-replay:<shell command>      (requests carry no pixel data)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Constant(f64),
    Ramp { event: EventTime, rise_s: f64 },
    NoisyRamp { event: EventTime, rise_s: f64, seed: u64, sigma: f64 },
    Replay(PathBuf),
    Subprocess { command: String, send_frames: bool },
}

impl ScorerSpec {
    pub fn build(&self) -> Result<Box<dyn Scorer>, SpecError> {
        Ok(match self {
            ScorerSpec::Constant(c) => Box::new(ConstantScorer::new(*c)?),
            ScorerSpec::Ramp { event, rise_s } => Box::new(RampScorer::new(*event, *rise_s)?),
            ScorerSpec::NoisyRamp { event, rise_s, seed, sigma } => {
                Box::new(NoisyRampScorer::new(RampScorer::new(*event, *rise_s)?, *seed, *sigma)?)
            }
            ScorerSpec::Replay(path) => Box::new(ReplayScorer::new(load_traces(path)?)),
            ScorerSpec::Subprocess { command, send_frames } => Box::new(SubprocessScorer::spawn(command, *send_frames)?),
        })
    }

    /// Whether the scorer reads pixel data at all.
    pub fn needs_pixels(&self) -> bool {
        matches!(self, ScorerSpec::Subprocess { send_frames: true, .. })
    }
}

fn parse_event(v: &str) -> Result<EventTime, String> {
    if v == "clip" {
        Ok(EventTime::FromClip)
    } else {
        v.parse().map(EventTime::Fixed).map_err(|e| format!("event `{v}`: {e}"))
    }
}

impl FromStr for ScorerSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |message: String| SpecError::Parse { spec: s.to_string(), message };
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = || -> Result<Vec<(&str, &str)>, SpecError> {
            rest.split(',')
                .filter(|p| !p.is_empty())
                .map(|p| p.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{p}`"))))
                .collect()
        };
        let num = |k: &str, v: &str| -> Result<f64, SpecError> { v.parse().map_err(|e| err(format!("{k}: {e}"))) };
        match kind {
            "constant" => Ok(ScorerSpec::Constant(num("constant", rest)?)),
            "ramp" | "noisy-ramp" => {
                let (mut event, mut rise_s, mut seed, mut sigma) = (EventTime::FromClip, 2.0, 0_u64, 0.1);
                for (k, v) in params()? {
                    match k {
                        "event" => event = parse_event(v).map_err(err)?,
                        "rise" => rise_s = num(k, v)?,
                        "seed" if kind == "noisy-ramp" => seed = v.parse().map_err(|e| err(format!("seed: {e}")))?,
                        "sigma" if kind == "noisy-ramp" => sigma = num(k, v)?,
                        _ => return Err(err(format!("unknown parameter `{k}`"))),
                    }
                }
                Ok(if kind == "ramp" {
                    ScorerSpec::Ramp { event, rise_s }
                } else {
                    ScorerSpec::NoisyRamp { event, rise_s, seed, sigma }
                })
            }
            "replay" if !rest.is_empty() => Ok(ScorerSpec::Replay(PathBuf::from(rest))),
            "subprocess" if !rest.is_empty() => Ok(ScorerSpec::Subprocess { command: rest.into(), send_frames: true }),
            "subprocess-replay" if !rest.is_empty() => {
                Ok(ScorerSpec::Subprocess { command: rest.into(), send_frames: false })
            }
            _ => Err(err("unknown scorer kind or missing argument".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("constant:0.3".parse::<ScorerSpec>().unwrap(), ScorerSpec::Constant(0.3));
        assert_eq!(
            "ramp:event=6.0,rise=2".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Ramp { event: EventTime::Fixed(6.0), rise_s: 2.0 }
        );
        assert_eq!(
            "noisy-ramp:seed=7".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::NoisyRamp { event: EventTime::FromClip, rise_s: 2.0, seed: 7, sigma: 0.1 }
        );
        assert_eq!(
            "subprocess:python3 model.py --x=1".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Subprocess { command: "python3 model.py --x=1".into(), send_frames: true }
        );
        assert!("ramp:seed=3".parse::<ScorerSpec>().is_err());
        assert!("replay".parse::<ScorerSpec>().is_err());
        assert!("magic".parse::<ScorerSpec>().is_err());
    }
}
