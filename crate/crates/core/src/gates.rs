//! Named gates used by circuits, devices and tomography.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis;
use crate::error::{QemError, Result};
use crate::linalg::{c, CMatrix};
use crate::ptm::Ptm;

/// A gate identifier. Single-qubit Kraus-form gates carry one Kraus operator;
/// basis operations 11-16 are the non-unitary projective entries of the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Gate {
    /// The identity; on devices with idle noise it carries memory noise.
    Id,
    H,
    S,
    Sdg,
    T,
    Tdg,
    X,
    Y,
    Z,
    /// (I + iX)/sqrt(2)
    Rx,
    /// (I + iZ)/sqrt(2)
    Rz,
    /// cos(pi/8) I + i sin(pi/8) X, the non-Clifford gate of the universal set.
    Tx,
    /// The projective measurement onto |0>, (I + Z)/2.
    Pi,
    Cnot,
    /// (I + i Z(x)Z)/sqrt(2)
    Lambda,
    /// Basis operation 1..=16.
    Basis(u8),
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::Cnot | Gate::Lambda => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Gate::Id => "id".into(),
            Gate::H => "h".into(),
            Gate::S => "s".into(),
            Gate::Sdg => "sdg".into(),
            Gate::T => "t".into(),
            Gate::Tdg => "tdg".into(),
            Gate::X => "x".into(),
            Gate::Y => "y".into(),
            Gate::Z => "z".into(),
            Gate::Rx => "rx".into(),
            Gate::Rz => "rz".into(),
            Gate::Tx => "tx".into(),
            Gate::Pi => "pi".into(),
            Gate::Cnot => "cnot".into(),
            Gate::Lambda => "lambda".into(),
            Gate::Basis(i) => format!("b{i}"),
        }
    }

    /// The single Kraus operator of the gate.
    pub fn kraus(&self) -> CMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let m2 = |a: [num_complex::Complex64; 4]| CMatrix::from_row_slice(2, 2, &a);
        match self {
            Gate::Id => m2([o, z, z, o]),
            Gate::H => m2([o * r, o * r, o * r, -o * r]),
            Gate::S => m2([o, z, z, i]),
            Gate::Sdg => m2([o, z, z, -i]),
            Gate::T => m2([o, z, z, c(r, r)]),
            Gate::Tdg => m2([o, z, z, c(r, -r)]),
            Gate::X => m2([z, o, o, z]),
            Gate::Y => m2([z, -i, i, z]),
            Gate::Z => m2([o, z, z, -o]),
            Gate::Rx => m2([o * r, i * r, i * r, o * r]),
            Gate::Rz => m2([c(r, r), z, z, c(r, -r)]),
            Gate::Tx => {
                let (s, co) = (std::f64::consts::PI / 8.0).sin_cos();
                m2([c(co, 0.0), c(0.0, s), c(0.0, s), c(co, 0.0)])
            }
            Gate::Pi => m2([o, z, z, z]),
            Gate::Cnot => {
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 0)] = o;
                m[(1, 1)] = o;
                m[(2, 3)] = o;
                m[(3, 2)] = o;
                m
            }
            Gate::Lambda => {
                let mut m = CMatrix::zeros(4, 4);
                for k in 0..4 {
                    let zz = if k == 0 || k == 3 { 1.0 } else { -1.0 };
                    m[(k, k)] = c(r, r * zz);
                }
                m
            }
            Gate::Basis(i) => basis::basis_kraus(*i as usize),
        }
    }

    pub fn ptm(&self) -> Ptm {
        Ptm::from_unitary(&self.kraus()).expect("gate Kraus operators are contractions")
    }

    /// Gates that map Pauli strings to signed Pauli strings.
    pub fn is_clifford(&self) -> bool {
        !matches!(self, Gate::T | Gate::Tdg | Gate::Tx | Gate::Pi)
            && !matches!(self, Gate::Basis(i) if *i >= 11)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Gate {
    type Err = QemError;
    fn from_str(s: &str) -> Result<Self> {
        let g = match s.to_ascii_lowercase().as_str() {
            "id" | "i" => Gate::Id,
            "h" => Gate::H,
            "s" => Gate::S,
            "sdg" => Gate::Sdg,
            "t" => Gate::T,
            "tdg" => Gate::Tdg,
            "x" => Gate::X,
            "y" => Gate::Y,
            "z" => Gate::Z,
            "rx" => Gate::Rx,
            "rz" => Gate::Rz,
            "tx" => Gate::Tx,
            "pi" => Gate::Pi,
            "cnot" | "cx" => Gate::Cnot,
            "lambda" => Gate::Lambda,
            other => {
                let idx = other
                    .strip_prefix('b')
                    .and_then(|d| d.parse::<u8>().ok())
                    .filter(|i| (1..=16).contains(i));
                match idx {
                    Some(i) => Gate::Basis(i),
                    None => {
                        return Err(QemError::InvalidArgument(format!("unknown gate '{s}'")))
                    }
                }
            }
        };
        Ok(g)
    }
}

impl From<Gate> for String {
    fn from(g: Gate) -> String {
        g.name()
    }
}

impl TryFrom<String> for Gate {
    type Error = QemError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn names_round_trip() {
        let mut all = vec![
            Gate::Id,
            Gate::H,
            Gate::S,
            Gate::Sdg,
            Gate::T,
            Gate::Tdg,
            Gate::X,
            Gate::Y,
            Gate::Z,
            Gate::Rx,
            Gate::Rz,
            Gate::Tx,
            Gate::Pi,
            Gate::Cnot,
            Gate::Lambda,
        ];
        all.extend((1..=16).map(Gate::Basis));
        for g in all {
            assert_eq!(g.name().parse::<Gate>().unwrap(), g);
        }
        assert!("b17".parse::<Gate>().is_err());
        assert!("foo".parse::<Gate>().is_err());
    }

    #[test]
    fn t_squared_is_s() {
        let t = Gate::T.ptm();
        assert_abs_diff_eq!(t.after(&t).matrix(), Gate::S.ptm().matrix(), epsilon = 1e-14);
        let id = Gate::T.ptm().after(&Gate::Tdg.ptm());
        assert_abs_diff_eq!(id.matrix(), Ptm::identity(1).matrix(), epsilon = 1e-14);
    }

    #[test]
    fn rx_squared_is_x() {
        let rx = Gate::Rx.ptm();
        assert_abs_diff_eq!(rx.after(&rx).matrix(), Gate::X.ptm().matrix(), epsilon = 1e-14);
    }

    #[test]
    fn lambda_is_entangling_clifford() {
        let l = Gate::Lambda.ptm();
        // every column is a signed unit vector
        for col in l.matrix().column_iter() {
            let nz: Vec<f64> = col.iter().cloned().filter(|v| v.abs() > 1e-12).collect();
            assert_eq!(nz.len(), 1);
            assert_abs_diff_eq!(nz[0].abs(), 1.0, epsilon = 1e-12);
        }
        // X on qubit 0 maps to a two-qubit string
        assert_abs_diff_eq!(l.matrix()[(2 * 4 + 3, 4)].abs(), 1.0, epsilon = 1e-12);
    }
}
