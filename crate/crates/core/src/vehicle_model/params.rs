use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and actuator limits of the tractor / dolly / semitrailer.
///
/// Lengths are in metres, angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Tractor wheelbase.
    pub l1: f64,
    /// Signed off-axle hitch offset behind the tractor rear axle.
    pub m1: f64,
    /// Dolly length (hitch to dolly axle).
    pub l2: f64,
    /// Semitrailer length (kingpin to trailer axle).
    pub l3: f64,
    /// Kingpin to semitrailer front edge.
    pub la: f64,
    /// Semitrailer width.
    pub b: f64,
    pub alpha_max: f64,
    pub omega_max: f64,
    pub u_omega_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            l1: 4.62,
            m1: 1.66,
            l2: 3.87,
            l3: 8.00,
            la: 1.73,
            b: 2.45,
            alpha_max: 42.0_f64.to_radians(),
            omega_max: 0.6,
            u_omega_max: 40.0,
        }
    }
}

const KEYS: [&str; 9] = ["L1", "M1", "L2", "L3", "La", "b", "alpha_max", "omega_max", "u_omega_max"];

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("La", self.la),
            ("b", self.b),
            ("alpha_max", self.alpha_max),
            ("omega_max", self.omega_max),
            ("u_omega_max", self.u_omega_max),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{k} must be positive, got {v}")));
            }
        }
        if !self.m1.is_finite() {
            return Err(Error::InvalidParameter("M1 must be finite".into()));
        }
        if self.alpha_max >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter("alpha_max must be below pi/2".into()));
        }
        Ok(())
    }

    /// Copy with the steering limit scaled by `factor` (e.g. 0.8 for a 20 % margin).
    pub fn tightened(&self, factor: f64) -> Self {
        Self { alpha_max: self.alpha_max * factor, ..*self }
    }

    /// Parse a flat `key = value` file. `#` starts a comment. Values may be a
    /// product/quotient of numbers and `pi`, e.g. `42*pi/180`.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 9] = [None; 9];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let idx = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)))?;
            if vals[idx].is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            vals[idx] = Some(
                eval_product(value.trim())
                    .ok_or_else(|| Error::Config(format!("line {}: bad value '{}'", lineno + 1, value.trim())))?,
            );
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Config(format!("missing key '{}'", KEYS[i])));
        let p = Self {
            l1: get(0)?,
            m1: get(1)?,
            l2: get(2)?,
            l3: get(3)?,
            la: get(4)?,
            b: get(5)?,
            alpha_max: get(6)?,
            omega_max: get(7)?,
            u_omega_max: get(8)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let v = [
            self.l1,
            self.m1,
            self.l2,
            self.l3,
            self.la,
            self.b,
            self.alpha_max,
            self.omega_max,
            self.u_omega_max,
        ];
        KEYS.iter().zip(v).map(|(k, v)| format!("{k} = {v:?}\n")).collect()
    }

    /// Stable 64-bit fingerprint of the parameter values (FNV-1a over the bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [
            self.l1,
            self.m1,
            self.l2,
            self.l3,
            self.la,
            self.b,
            self.alpha_max,
            self.omega_max,
            self.u_omega_max,
        ] {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

fn eval_product(expr: &str) -> Option<f64> {
    let mut acc = 1.0;
    let mut op = '*';
    let mut token = String::new();
    let apply = |acc: f64, op: char, tok: &str| -> Option<f64> {
        let t = tok.trim();
        let v = if t.eq_ignore_ascii_case("pi") { std::f64::consts::PI } else { t.parse::<f64>().ok()? };
        Some(if op == '*' { acc * v } else { acc / v })
    };
    for c in expr.chars() {
        if c == '*' || c == '/' {
            acc = apply(acc, op, &token)?;
            token.clear();
            op = c;
        } else {
            token.push(c);
        }
    }
    let v = apply(acc, op, &token)?;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let p = VehicleParams::default();
        let q = VehicleParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.fingerprint(), q.fingerprint());
    }

    #[test]
    fn config_accepts_pi_expressions() {
        let text = "L1=4.62\nM1=1.66 # hitch\nL2=3.87\nL3=8\nLa=1.73\nb=2.45\nalpha_max=42*pi/180\nomega_max=0.6\nu_omega_max=40\n";
        let p = VehicleParams::from_config_str(text).unwrap();
        assert!((p.alpha_max - 42f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(VehicleParams::from_config_str("L1=4.62\n").is_err());
        let mut s = VehicleParams::default().to_config_string();
        s.push_str("L1 = 3\n");
        assert!(VehicleParams::from_config_str(&s).is_err());
        let s = VehicleParams::default().to_config_string().replace("L2 = 3.87", "L2 = -1");
        assert!(matches!(VehicleParams::from_config_str(&s), Err(Error::InvalidParameter(_))));
    }
}
