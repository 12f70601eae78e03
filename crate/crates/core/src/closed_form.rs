//! Known exact value functions of the builtin problems, with the sets where
//! they are not smooth.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClosedForm {
    /// `x1 - 2 tau` for `x1 >= 2 tau`, `x1 / 2 - tau` for `0 <= x1 < 2 tau`,
    /// `x1 - tau` for `x1 < 0`, with `tau = T - t`.
    ExampleE,
    /// `tau + |x1|`, valid off the interface only.
    ExampleA,
    /// `1{x > -tau}`: the terminal jump transported left.
    ExampleB,
    /// `1{x > tau}`.
    ExampleF,
    /// `max(|x1| - tau, 0)`.
    BallEikonal,
}

impl ClosedForm {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exampleE" => Some(Self::ExampleE),
            "exampleA" => Some(Self::ExampleA),
            "exampleB" | "f-equals-one" => Some(Self::ExampleB),
            "exampleF" => Some(Self::ExampleF),
            "ball-eikonal" => Some(Self::BallEikonal),
            _ => None,
        }
    }

    pub fn value(&self, horizon: f64, t: f64, x: &[f64]) -> f64 {
        let tau = horizon - t;
        let x1 = x[0];
        match self {
            Self::ExampleE => {
                if x1 >= 2.0 * tau {
                    x1 - 2.0 * tau
                } else if x1 >= 0.0 {
                    x1 / 2.0 - tau
                } else {
                    x1 - tau
                }
            }
            Self::ExampleA => tau + x1.abs(),
            Self::ExampleB => f64::from(u8::from(x1 > -tau)),
            Self::ExampleF => f64::from(u8::from(x1 > tau)),
            Self::BallEikonal => (x1.abs() - tau).max(0.0),
        }
    }

    /// Whether `(t, x)` lies within `band` of a set where the exact value is
    /// not smooth (or, for the interface-ambiguous case, too close to it).
    pub fn excluded(&self, horizon: f64, t: f64, x: &[f64], band: f64) -> bool {
        let tau = horizon - t;
        let x1 = x[0];
        match self {
            Self::ExampleE => x1.abs() < band || (x1 - 2.0 * tau).abs() < band,
            Self::ExampleA => x1.abs() < band.max(0.1),
            Self::ExampleB => (x1 + tau).abs() <= band,
            Self::ExampleF => (x1 - tau).abs() <= band,
            Self::BallEikonal => (x1.abs() - tau).abs() < band,
        }
    }
}
