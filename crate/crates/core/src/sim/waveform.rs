use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    Constant {
        value: f64,
    },
    Sine {
        amplitude: f64,
        offset: f64,
        period_s: f64,
    },
    Ramp {
        slope_per_s: f64,
        offset: f64,
    },
    UniformNoise {
        amplitude: f64,
        offset: f64,
        seed: u64,
    },
}

impl Waveform {
    pub fn kind(&self) -> &'static str {
        match self {
            Waveform::Constant { .. } => "constant",
            Waveform::Sine { .. } => "sine",
            Waveform::Ramp { .. } => "ramp",
            Waveform::UniformNoise { .. } => "uniform_noise",
        }
    }
}

/// Value of `w` at `t_us` microseconds after the TIM started. Pure: the
/// same waveform and time always give the same value.
pub fn sample(w: &Waveform, t_us: u64) -> f64 {
    let t = t_us as f64 / 1e6;
    match *w {
        Waveform::Constant { value } => value,
        Waveform::Sine {
            amplitude,
            offset,
            period_s,
        } => offset + amplitude * (TAU * t / period_s).sin(),
        Waveform::Ramp {
            slope_per_s,
            offset,
        } => offset + slope_per_s * t,
        Waveform::UniformNoise {
            amplitude,
            offset,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t_us);
            offset + amplitude * rng.random_range(-1.0..=1.0)
        }
    }
}

/// One simulated channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimChannel {
    pub channel_id: u8,
    pub waveform: Waveform,
    /// Sampling period used until the NCAP configures another.
    pub native_period_us: u32,
}

pub const DEFAULT_PERIOD_US: u32 = 100_000;

impl fmt::Display for SimChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.channel_id, self.waveform.kind())?;
        match self.waveform {
            Waveform::Constant { value } => write!(f, "value={value}")?,
            Waveform::Sine {
                amplitude,
                offset,
                period_s,
            } => write!(
                f,
                "amplitude={amplitude},offset={offset},period_s={period_s}"
            )?,
            Waveform::Ramp {
                slope_per_s,
                offset,
            } => write!(f, "slope={slope_per_s},offset={offset}")?,
            Waveform::UniformNoise {
                amplitude,
                offset,
                seed,
            } => write!(f, "amplitude={amplitude},offset={offset},seed={seed}")?,
        }
        write!(f, ",period_us={}", self.native_period_us)
    }
}

/// `<id>:<kind>[:<key>=<value>,...]`, for example `0:sine:amplitude=2,period_s=5`
/// or `1:constant:value=21.5,period_us=200000`. Unset parameters default to
/// amplitude 1, offset 0, period_s 1, slope 1, seed 0, value 0.
impl FromStr for SimChannel {
    type Err = SimError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = |why: String| SimError::InvalidConfig(format!("channel {spec:?}: {why}"));
        let mut parts = spec.splitn(3, ':');
        let id = parts.next().unwrap_or_default();
        let channel_id: u8 = id
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad channel id {id:?}")))?;
        let kind = parts
            .next()
            .ok_or_else(|| bad("missing waveform".into()))?
            .trim();
        let mut params = std::collections::BTreeMap::new();
        for kv in parts
            .next()
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.trim().is_empty())
        {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str, default: f64| -> Result<f64, SimError> {
            match params.remove(key) {
                None => Ok(default),
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("{key}={v} is not a finite number"))),
            }
        };
        let native_period_us = take("period_us", f64::from(DEFAULT_PERIOD_US))?;
        let waveform = match kind {
            "constant" => Waveform::Constant {
                value: take("value", 0.0)?,
            },
            "sine" => Waveform::Sine {
                amplitude: take("amplitude", 1.0)?,
                offset: take("offset", 0.0)?,
                period_s: take("period_s", 1.0)?,
            },
            "ramp" => Waveform::Ramp {
                slope_per_s: take("slope", 1.0)?,
                offset: take("offset", 0.0)?,
            },
            "uniform_noise" => {
                let amplitude = take("amplitude", 1.0)?;
                let offset = take("offset", 0.0)?;
                let seed = take("seed", 0.0)?;
                if seed < 0.0 || seed.fract() != 0.0 {
                    return Err(bad("seed must be a non-negative integer".into()));
                }
                Waveform::UniformNoise {
                    amplitude,
                    offset,
                    seed: seed as u64,
                }
            }
            other => return Err(bad(format!("unknown waveform {other:?}"))),
        };
        if let Some(k) = params.keys().next() {
            return Err(bad(format!("unknown parameter {k:?} for {kind}")));
        }
        if let Waveform::Sine { period_s, .. } = waveform {
            if period_s <= 0.0 {
                return Err(bad("period_s must be positive".into()));
            }
        }
        if native_period_us < 1.0
            || native_period_us > f64::from(u32::MAX)
            || native_period_us.fract() != 0.0
        {
            return Err(bad("period_us must be a positive integer".into()));
        }
        Ok(SimChannel {
            channel_id,
            waveform,
            native_period_us: native_period_us as u32,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_and_ramp() {
        let c = Waveform::Constant { value: 5.0 };
        assert_eq!(sample(&c, 0), 5.0);
        assert_eq!(sample(&c, 123_456_789), 5.0);
        let r = Waveform::Ramp {
            slope_per_s: 1.0,
            offset: 0.0,
        };
        assert_eq!(sample(&r, 2_000_000), 2.0);
    }

    #[test]
    fn sine_quarter_period() {
        let s = Waveform::Sine {
            amplitude: 2.0,
            offset: 1.0,
            period_s: 4.0,
        };
        assert!((sample(&s, 1_000_000) - 3.0).abs() < 1e-12);
        assert!((sample(&s, 3_000_000) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_replays() {
        let w = Waveform::UniformNoise {
            amplitude: 1.0,
            offset: 0.0,
            seed: 42,
        };
        let a: Vec<f64> = (0..100).map(|i| sample(&w, i * 1000)).collect();
        let b: Vec<f64> = (0..100).map(|i| sample(&w, i * 1000)).collect();
        assert_eq!(a, b);
        let other = Waveform::UniformNoise {
            amplitude: 1.0,
            offset: 0.0,
            seed: 43,
        };
        assert_ne!(
            a,
            (0..100)
                .map(|i| sample(&other, i * 1000))
                .collect::<Vec<_>>()
        );
        // not constant
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn spec_parsing() {
        let c: SimChannel = "1:constant:value=21.5,period_us=200000".parse().unwrap();
        assert_eq!(c.channel_id, 1);
        assert_eq!(c.waveform, Waveform::Constant { value: 21.5 });
        assert_eq!(c.native_period_us, 200_000);
        let s: SimChannel = "0:sine".parse().unwrap();
        assert_eq!(s.native_period_us, DEFAULT_PERIOD_US);
        for bad in [
            "",
            "x:sine",
            "0",
            "0:square",
            "0:sine:amplitude",
            "0:sine:colour=red",
            "0:sine:period_s=0",
            "0:ramp:period_us=0",
            "0:uniform_noise:seed=-1",
        ] {
            assert!(bad.parse::<SimChannel>().is_err(), "{bad}");
        }
        let n: SimChannel = "3:uniform_noise:amplitude=0.5,seed=7".parse().unwrap();
        assert_eq!(n.to_string().parse::<SimChannel>().unwrap(), n);
    }

    proptest! {
        #[test]
        fn sine_stays_in_bounds(t in any::<u64>(), period in 0.001f64..1000.0) {
            let v = sample(&Waveform::Sine { amplitude: 1.0, offset: 0.0, period_s: period }, t);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn noise_stays_in_bounds(t in any::<u64>(), seed in any::<u64>(), amp in 0.0f64..100.0) {
            let v = sample(&Waveform::UniformNoise { amplitude: amp, offset: 3.0, seed }, t);
            prop_assert!(v >= 3.0 - amp && v <= 3.0 + amp);
        }
    }
}
