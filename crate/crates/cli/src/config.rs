//! Flat `key=value` configuration with per-subcommand schemas.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::CliError;

/// One configurable key: name, default, description.
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key { name, default, doc }
}

pub const EIGEN: &[Key] = &[
    key("quotient", "trace", "trace | trace_omega | hardy | boundary_hardy | sweep"),
    key("a", "0.5", "comma-separated weight exponents"),
    key("eps", "0", "regularisation parameter"),
    key("h", "1/64", "radial mesh spacing"),
    key("r", "1,4,16,64,256", "increasing radii for quotient=sweep (eps = 1/r)"),
    key("form", "rho", "rho | omega_inverse, for quotient=sweep"),
    key("weight_power", "0", "w = y^p for quotient=hardy and boundary_hardy"),
    key("trace_tol", "0.05", "allowed |lambda - (1-a)| for trace at eps=0"),
    key("omega_tol", "0.1", "allowed |lambda - (3-a)| for trace_omega at eps=0"),
    key("hardy_min", "0.25", "lower Hardy window for w=1"),
    key("hardy_max", "0.40", "upper Hardy window for w=1"),
    key("residual_tol", "1e-8", "largest accepted eigen residual"),
];

pub const SWEEP: &[Key] = &[
    key("family", "standard", "standard | fermi"),
    key("a", "0.5", "weight exponent"),
    key("mu_x2", "0", "mu = 1 + mu_x2 x^2 for the standard family"),
    key("radius", "2", "circle radius for the fermi family"),
    key("mode", "ratio_c0", "ratio_c0 | ratio_c1 | odd_direct_c0"),
    key("alpha", "0.4", "Hölder exponent"),
    key("h", "1/64", "grid spacing"),
    key("eps", "1,0.3,0.1,0.03,0.01,0", "eps list; must contain 0 and span two decades"),
    key("tau", "3", "largest accepted max/min seminorm ratio"),
    key("slope_tol", "0.1", "largest accepted growth slope in log(1/eps)"),
    key("x_max", "0.5", "measuring region |x| <= x_max"),
    key("y_min", "0", "measuring region y >= y_min"),
    key("y_max", "0.5", "measuring region y <= y_max"),
    key("restrict", "false", "measure on y >= sqrt(eps) only"),
    key("p1", "inf", "integrability exponent of f"),
    key("p2", "inf", "integrability exponent of F"),
    key("beta", "2", "exponent of the L^beta norm of the ratio"),
    key("solver_tol", "1e-10", "relative residual of the linear solves"),
];

pub const CERTIFY: &[Key] = &[key("phi_a", "0.9,0.5,0,-1,-3,-10", "exponents for the Phi bound")];

pub const SOLVE: &[Key] = &[
    key("a", "0.5", "weight exponent of |y|^a"),
    key("h", "1/16,1/32,1/64", "grid spacings, decreasing"),
    key("y_min", "0.1", "errors are measured on y >= y_min"),
    key("min_order", "1.5", "smallest accepted observed order"),
];

pub const FERMI: &[Key] = &[
    key("radius", "2", "circle radius"),
    key("a", "0.5", "weight exponent"),
    key("alpha", "0.4", "Hölder exponent"),
    key("h", "1/64", "grid spacing"),
    key("eps", "1,0.3,0.1,0.03,0.01,0", "eps list"),
    key("tau", "3", "largest accepted max/min seminorm ratio"),
    key("slope_tol", "0.1", "largest accepted growth slope in log(1/eps)"),
    key("solver_tol", "1e-10", "relative residual of the linear solves"),
];

pub const REPORT: &[Key] = &[];

pub fn schema(command: &str) -> &'static [Key] {
    match command {
        "eigen" => EIGEN,
        "sweep" => SWEEP,
        "certify" => CERTIFY,
        "solve" => SOLVE,
        "fermi-demo" => FERMI,
        _ => REPORT,
    }
}

/// Effective configuration of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub command: String,
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {raw:?}", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Config {
    /// Defaults, then `file`, then `flags`; unknown keys are rejected.
    pub fn resolve(
        command: &str,
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let keys = schema(command);
        let mut values: BTreeMap<String, String> =
            keys.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        for (k, v) in file.into_iter().chain(flags) {
            if !values.contains_key(&k) {
                return Err(CliError::Usage(format!("unknown key {k:?} for {command}")));
            }
            values.insert(k, v);
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        harnack_core::report::config_hash(&self.canonical())
    }

    pub fn str(&self, k: &str) -> &str {
        self.values.get(k).map(String::as_str).unwrap_or("")
    }

    pub fn num(&self, k: &str) -> Result<f64, CliError> {
        parse_number(self.str(k)).map_err(|e| CliError::Usage(format!("{k}: {e}")))
    }

    pub fn list(&self, k: &str) -> Result<Vec<f64>, CliError> {
        self.str(k)
            .split(',')
            .map(|s| parse_number(s).map_err(|e| CliError::Usage(format!("{k}: {e}"))))
            .collect()
    }

    pub fn flag(&self, k: &str) -> Result<bool, CliError> {
        match self.str(k) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(CliError::Usage(format!("{k}: expected a boolean, got {v:?}"))),
        }
    }
}

/// A decimal, `inf`, or a fraction `p/q`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
        let q: f64 = q.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
        p / q
    } else {
        s.parse().map_err(|_| format!("bad number {s:?}"))?
    };
    if v.is_nan() {
        return Err(format!("bad number {s:?}"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("1/64").unwrap(), 1.0 / 64.0);
        assert_eq!(parse_number(" -0.5 ").unwrap(), -0.5);
        assert_eq!(parse_number("inf").unwrap(), f64::INFINITY);
        assert!(parse_number("x").is_err());
        assert!(parse_number("nan").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_file("# comment\na = 0.3\nh=1/32 # trailing\n\n").unwrap();
        let flags = BTreeMap::from([("a".to_string(), "0".to_string())]);
        let c = Config::resolve("eigen", file, flags).unwrap();
        assert_eq!(c.num("a").unwrap(), 0.0);
        assert_eq!(c.num("h").unwrap(), 1.0 / 32.0);
        assert_eq!(c.str("quotient"), "trace");
    }

    #[test]
    fn unknown_keys_and_bad_lines() {
        assert!(matches!(parse_file("novalue"), Err(CliError::Usage(_))));
        let file = BTreeMap::from([("bogus".to_string(), "1".to_string())]);
        assert!(matches!(Config::resolve("eigen", file, BTreeMap::new()), Err(CliError::Usage(_))));
    }

    #[test]
    fn hash_depends_on_values_only() {
        let a = Config::resolve("solve", BTreeMap::new(), BTreeMap::new()).unwrap();
        let f = parse_file(&format!("a={}", "0.5")).unwrap();
        let b = Config::resolve("solve", f, BTreeMap::new()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let f = parse_file("a=0.25").unwrap();
        let c = Config::resolve("solve", f, BTreeMap::new()).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
