//! Benchmark loss landscapes.
//!
//! Each landscape maps a parameter vector to a per-training-pair loss vector;
//! the scalar loss is the arithmetic mean of that vector. The synthetic
//! functions expose a single training pair so the loss-vector machinery is
//! exercised uniformly; the XOR step network exposes four. All evaluations
//! are pure functions of the parameters.

use crate::error::Error;
use crate::params::ParamVector;

/// XOR truth table used by the step-activation network.
const XOR_PAIRS: [([f64; 2], f64); 4] =
    [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)];

/// Heaviside step with the step(0) = 1 convention.
#[inline]
fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Landscape {
    /// L = sum(theta_i^2). Global minimum 0 at the origin.
    Sphere { dim: usize },
    /// L = 10 d + sum(theta_i^2 - 10 cos(2 pi theta_i)). Multimodal, minimum 0
    /// at the origin.
    Rastrigin { dim: usize },
    /// 2-2-1 network with Heaviside hidden activations and identity output,
    /// squared error over the four XOR pairs. Non-differentiable by
    /// construction. Nine parameters: hidden weights (row-major 2x2), hidden
    /// biases (2), output weights (2), output bias.
    XorStepMlp,
}

impl Landscape {
    /// Look up a landscape by its config name.
    pub fn by_name(name: &str, dim: usize) -> Result<Landscape, Error> {
        match name {
            "sphere" => Ok(Landscape::Sphere { dim }),
            "rastrigin" => Ok(Landscape::Rastrigin { dim }),
            "xor-step-mlp" => {
                if dim != 9 {
                    return Err(Error::config(
                        "landscape.dim",
                        format!("xor-step-mlp requires dim = 9, got {dim}"),
                    ));
                }
                Ok(Landscape::XorStepMlp)
            }
            other => {
                Err(Error::config("landscape.name", format!("unknown landscape `{other}`")))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Landscape::Sphere { .. } => "sphere",
            Landscape::Rastrigin { .. } => "rastrigin",
            Landscape::XorStepMlp => "xor-step-mlp",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Landscape::Sphere { dim } | Landscape::Rastrigin { dim } => *dim,
            Landscape::XorStepMlp => 9,
        }
    }

    pub fn training_pair_count(&self) -> usize {
        match self {
            Landscape::XorStepMlp => 4,
            _ => 1,
        }
    }

    /// Per-training-pair losses. Errors if the result is non-finite.
    pub fn loss_vector(&self, theta: &ParamVector) -> Result<Vec<f64>, Error> {
        debug_assert_eq!(theta.dim(), self.dim());
        let v = theta.as_slice();
        let out = match self {
            Landscape::Sphere { .. } => {
                vec![v.iter().map(|x| x * x).sum::<f64>()]
            }
            Landscape::Rastrigin { .. } => {
                let d = v.len() as f64;
                let sum: f64 = v
                    .iter()
                    .map(|x| x * x - 10.0 * (std::f64::consts::TAU * x).cos())
                    .sum();
                vec![10.0 * d + sum]
            }
            Landscape::XorStepMlp => {
                let (w, b, o, c) = (&v[0..4], &v[4..6], &v[6..8], v[8]);
                XOR_PAIRS
                    .iter()
                    .map(|([x1, x2], y)| {
                        let h1 = step(w[0] * x1 + w[1] * x2 + b[0]);
                        let h2 = step(w[2] * x1 + w[3] * x2 + b[1]);
                        let out = o[0] * h1 + o[1] * h2 + c;
                        (out - y) * (out - y)
                    })
                    .collect()
            }
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::LandscapeOverflow);
        }
        Ok(out)
    }
}

/// Arithmetic mean of a loss vector.
pub fn mean_loss(loss_vector: &[f64]) -> f64 {
    loss_vector.iter().sum::<f64>() / loss_vector.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sphere_analytic() {
        let l = Landscape::Sphere { dim: 2 };
        assert_eq!(l.loss_vector(&pv(&[0.0, 0.0])).unwrap(), vec![0.0]);
        assert_eq!(l.loss_vector(&pv(&[3.0, 4.0])).unwrap(), vec![25.0]);
        let l4 = Landscape::Sphere { dim: 4 };
        assert_eq!(l4.loss_vector(&pv(&[1.0, 1.0, 1.0, 1.0])).unwrap(), vec![4.0]);
    }

    #[test]
    fn rastrigin_analytic() {
        let l = Landscape::Rastrigin { dim: 2 };
        let zero = l.loss_vector(&pv(&[0.0, 0.0])).unwrap()[0];
        assert!(zero.abs() < 1e-12);
        let ones = l.loss_vector(&pv(&[1.0, 1.0])).unwrap()[0];
        assert!((ones - 2.0).abs() < 1e-9);
        // 10*1 + 0.25 - 10*cos(pi) = 10.25 + 10 = 20.25, direct arithmetic.
        let l1 = Landscape::Rastrigin { dim: 1 };
        let half = l1.loss_vector(&pv(&[0.5])).unwrap()[0];
        assert!((half - 20.25).abs() < 1e-9);
    }

    /// Direct enumeration of the four XOR pairs through the handcrafted
    /// OR / NAND / AND-combiner weight set, confirming zero loss.
    #[test]
    fn xor_handcrafted_weights_solve_it() {
        // hidden 1 = OR(x1,x2), hidden 2 = NAND(x1,x2), out = h1 + h2 - 1.
        let theta = pv(&[1.0, 1.0, -1.0, -1.0, -0.5, 1.5, 1.0, 1.0, -1.0]);
        let l = Landscape::XorStepMlp;
        // Oracle: enumerate the table by hand first.
        for ([x1, x2], y) in XOR_PAIRS {
            let h1 = if x1 + x2 - 0.5 >= 0.0 { 1.0 } else { 0.0 };
            let h2 = if -x1 - x2 + 1.5 >= 0.0 { 1.0 } else { 0.0 };
            assert_eq!(h1 + h2 - 1.0, y, "oracle enumeration at ({x1},{x2})");
        }
        let lv = l.loss_vector(&theta).unwrap();
        assert_eq!(lv, vec![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn xor_zero_vector_loss_half() {
        // With all-zero parameters every hidden unit fires (step(0) = 1) and
        // the output is 0 for each pair, so the error enumerates to y^2.
        let l = Landscape::XorStepMlp;
        let lv = l.loss_vector(&pv(&[0.0; 9])).unwrap();
        assert_eq!(lv, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(mean_loss(&lv), 0.5);
    }

    #[test]
    fn xor_shape_and_sign() {
        let l = Landscape::XorStepMlp;
        let mut rng = SplitMix64::new(11);
        for _ in 0..100 {
            let theta =
                pv(&(0..9).map(|_| rng.next_standard_normal()).collect::<Vec<_>>());
            let lv = l.loss_vector(&theta).unwrap();
            assert_eq!(lv.len(), 4);
            assert!(lv.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn deterministic_re_evaluation() {
        let mut rng = SplitMix64::new(5);
        for l in [
            Landscape::Sphere { dim: 6 },
            Landscape::Rastrigin { dim: 6 },
        ] {
            for _ in 0..1000 {
                let theta = pv(&(0..6)
                    .map(|_| rng.next_standard_normal() * 3.0)
                    .collect::<Vec<_>>());
                let a = l.loss_vector(&theta).unwrap();
                let b = l.loss_vector(&theta).unwrap();
                assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    /// Sampled difference quotients stay below k = 2 * sup ||theta|| on a
    /// bounded box, the smoothness constant for the sphere.
    #[test]
    fn sphere_difference_quotient_bound() {
        let dim = 8;
        let bound = 5.0;
        let k = 2.0 * bound * (dim as f64).sqrt();
        let l = Landscape::Sphere { dim };
        let mut rng = SplitMix64::new(17);
        let mut sample = || {
            pv(&(0..dim)
                .map(|_| (rng.next_open01() * 2.0 - 1.0) * bound)
                .collect::<Vec<_>>())
        };
        for _ in 0..2000 {
            let a = sample();
            let b = sample();
            let la = l.loss_vector(&a).unwrap()[0];
            let lb = l.loss_vector(&b).unwrap()[0];
            let dist: f64 = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dist > 1e-9 {
                assert!((la - lb).abs() / dist < k);
            }
        }
    }

    #[test]
    fn by_name_validates() {
        assert!(Landscape::by_name("sphere", 3).is_ok());
        assert!(Landscape::by_name("xor-step-mlp", 9).is_ok());
        assert!(Landscape::by_name("xor-step-mlp", 8).is_err());
        assert!(Landscape::by_name("nope", 3).is_err());
    }
}
