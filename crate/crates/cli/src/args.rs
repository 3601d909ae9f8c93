//! Flag parsing for the `pd` command line.

use std::collections::BTreeMap;

pub const KNOWN_FLAGS: &[&str] = &[
    "spec",
    "point",
    "grid",
    "path",
    "trange",
    "order",
    "epsilon",
    "tol",
    "seed",
    "samples",
    "dt",
    "steps",
    "method",
    "invariant",
    "hamiltonian",
    "output",
    "format",
];

/// One grid axis: (min, max, count).
pub type GridAxis = (f64, f64, usize);

#[derive(Debug, Clone)]
pub struct ParsedArgs {
    pub command: String,
    flags: BTreeMap<String, Vec<String>>,
}

impl ParsedArgs {
    pub fn parse(args: &[String]) -> Result<ParsedArgs, String> {
        let command = args
            .first()
            .ok_or_else(|| "missing command".to_string())?
            .clone();
        let mut flags: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut i = 1;
        while i < args.len() {
            let arg = &args[i];
            let name = arg
                .strip_prefix("--")
                .ok_or_else(|| format!("expected a --flag, found '{arg}'"))?;
            if !KNOWN_FLAGS.contains(&name) {
                return Err(format!("unknown flag '--{name}'"));
            }
            let value = args
                .get(i + 1)
                .ok_or_else(|| format!("flag '--{name}' needs a value"))?
                .clone();
            flags.entry(name.to_string()).or_default().push(value);
            i += 2;
        }
        Ok(ParsedArgs { command, flags })
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.flags
            .get(name)
            .and_then(|v| v.last())
            .map(|s| s.as_str())
    }

    pub fn get_all(&self, name: &str) -> Vec<&str> {
        self.flags
            .get(name)
            .map(|v| v.iter().map(|s| s.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn require(&self, name: &str) -> Result<&str, String> {
        self.get(name)
            .ok_or_else(|| format!("missing required flag '--{name}'"))
    }

    pub fn f64(&self, name: &str) -> Result<Option<f64>, String> {
        self.get(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| format!("flag '--{name}': '{v}' is not a number"))
            })
            .transpose()
    }

    pub fn usize(&self, name: &str) -> Result<Option<usize>, String> {
        self.get(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| format!("flag '--{name}': '{v}' is not an integer"))
            })
            .transpose()
    }

    pub fn u64(&self, name: &str) -> Result<Option<u64>, String> {
        self.get(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| format!("flag '--{name}': '{v}' is not an integer"))
            })
            .transpose()
    }

    /// Comma-separated list of numbers, e.g. `--point 1,2,-0.5`.
    pub fn number_list(&self, name: &str) -> Result<Option<Vec<f64>>, String> {
        self.get(name)
            .map(|v| {
                v.split(',')
                    .map(|part| {
                        part.trim()
                            .parse()
                            .map_err(|_| format!("flag '--{name}': '{part}' is not a number"))
                    })
                    .collect()
            })
            .transpose()
    }

    /// `a,b,n` triple for parameter ranges.
    pub fn trange(&self) -> Result<Option<(f64, f64, usize)>, String> {
        match self.get("trange") {
            None => Ok(None),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.len() != 3 {
                    return Err("flag '--trange' expects 'a,b,n'".to_string());
                }
                let a: f64 = parts[0]
                    .trim()
                    .parse()
                    .map_err(|_| "trange start is not a number".to_string())?;
                let b: f64 = parts[1]
                    .trim()
                    .parse()
                    .map_err(|_| "trange end is not a number".to_string())?;
                let n: usize = parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| "trange count is not an integer".to_string())?;
                if n < 2 {
                    return Err("trange count must be at least 2".to_string());
                }
                Ok(Some((a, b, n)))
            }
        }
    }

    /// Grid spec: one `min:max:count` block per coordinate, comma
    /// separated.
    pub fn grid(&self) -> Result<Option<Vec<GridAxis>>, String> {
        match self.get("grid") {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|block| {
                    let parts: Vec<&str> = block.split(':').collect();
                    if parts.len() != 3 {
                        return Err(format!("grid block '{block}' must be 'min:max:count'"));
                    }
                    let lo: f64 = parts[0]
                        .trim()
                        .parse()
                        .map_err(|_| format!("grid block '{block}': bad min"))?;
                    let hi: f64 = parts[1]
                        .trim()
                        .parse()
                        .map_err(|_| format!("grid block '{block}': bad max"))?;
                    let count: usize = parts[2]
                        .trim()
                        .parse()
                        .map_err(|_| format!("grid block '{block}': bad count"))?;
                    if count < 1 {
                        return Err(format!("grid block '{block}': count must be positive"));
                    }
                    Ok((lo, hi, count))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}
