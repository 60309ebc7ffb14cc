//! INI-style run configuration: `[section]` headers, `key = value` lines,
//! `#`/`;` comments, numbers in decimal or scientific notation, matrices
//! as row-major comma lists. Validation accumulates every error instead
//! of stopping at the first.

use std::collections::BTreeMap;

use stabmin::criterion::CriterionMode;

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum Builtin {
    Zero,
    Linear { matrix: Vec<f64> },
    Quadratic { q: Vec<f64>, linear: Option<Vec<f64>>, constant: Option<Vec<f64>> },
    Sinusoidal { amplitude: Vec<f64>, frequency: Vec<f64> },
    RandomSmooth { amplitude: f64, modes: usize, tilt: Option<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct FunctionSpec {
    pub m: usize,
    pub builtin: Builtin,
}

#[derive(Debug, Clone, Copy)]
pub enum Scaling {
    Auto,
    None,
    Factor(f64),
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub dt_safety: f64,
    pub max_steps: usize,
    pub residual_target: f64,
    pub omega_floor: f64,
    pub log_interval: usize,
    pub scaling: Scaling,
}

#[derive(Debug, Clone)]
pub struct AlgebraSpec {
    pub count: usize,
    /// `None` selects the critical slope for `c(n, m)`.
    pub lambda_cap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub dir: Option<String>,
    pub fixed_clock: bool,
    pub write_fields: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub function: FunctionSpec,
    pub mode: CriterionMode,
    pub seed: u64,
    pub tol_eig_scale: f64,
    pub flow: FlowSpec,
    pub algebra: AlgebraSpec,
    pub output: OutputSpec,
}

type Entries = BTreeMap<String, (String, usize)>;

fn parse_ini(text: &str) -> Result<BTreeMap<String, Entries>, Vec<String>> {
    let mut sections: BTreeMap<String, Entries> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find(['#', ';']) {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {line_no}: expected 'key = value', got '{line}'"));
            continue;
        };
        let Some(section) = current.clone() else {
            errors.push(format!("line {line_no}: key outside any [section]"));
            continue;
        };
        let key = key.trim().to_string();
        let entries = sections.get_mut(&section).unwrap();
        if entries.contains_key(&key) {
            errors.push(format!("line {line_no}: duplicate key '{key}' in [{section}]"));
        } else {
            entries.insert(key, (value.trim().to_string(), line_no));
        }
    }
    if errors.is_empty() {
        Ok(sections)
    } else {
        Err(errors)
    }
}

struct Section<'a> {
    name: &'a str,
    entries: Option<&'a Entries>,
    seen: Vec<String>,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.seen.push(key.to_string());
        self.entries.and_then(|e| e.get(key)).map(|(v, _)| v.as_str())
    }

    fn required_note(&mut self, key: &str, what: &str) {
        self.errors.push(format!("[{}] missing required key '{key}' ({what})", self.name));
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        match raw.parse::<f64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("[{name}] {key}: '{raw}' is not a number"));
                None
            }
        }
    }

    fn usize(&mut self, key: &str) -> Option<usize> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        match raw.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("[{name}] {key}: '{raw}' is not a non-negative integer"));
                None
            }
        }
    }

    fn u64(&mut self, key: &str) -> Option<u64> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        match raw.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("[{name}] {key}: '{raw}' is not a seed value"));
                None
            }
        }
    }

    fn bool(&mut self, key: &str) -> Option<bool> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        match raw {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            other => {
                self.errors.push(format!("[{name}] {key}: '{other}' is not a boolean"));
                None
            }
        }
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.errors
                        .push(format!("[{name}] {key}: '{}' is not a number", part.trim()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn usize_list(&mut self, key: &str) -> Option<Vec<usize>> {
        let name = self.name.to_string();
        let raw = self.raw(key)?;
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<usize>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.errors
                        .push(format!("[{name}] {key}: '{}' is not an integer", part.trim()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn finish(self, sections: &BTreeMap<String, Entries>) {
        if let Some(entries) = sections.get(self.name) {
            for key in entries.keys() {
                if !self.seen.contains(key) {
                    self.errors.push(format!("[{}] unknown key '{key}'", self.name));
                }
            }
        }
    }
}

/// Parses and validates a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let sections = parse_ini(text)?;
    let mut errors: Vec<String> = Vec::new();
    for name in sections.keys() {
        if !["domain", "function", "constants", "flow", "algebra", "output"].contains(&name.as_str()) {
            errors.push(format!("unknown section [{name}]"));
        }
    }

    // [domain]
    let mut n = 0usize;
    let mut bounds = Vec::new();
    let mut resolution = Vec::new();
    {
        let mut s = Section { name: "domain", entries: sections.get("domain"), seen: vec![], errors: &mut errors };
        match s.usize("n") {
            Some(v) if v >= 1 => n = v,
            Some(v) => s.errors.push(format!("[domain] n must be positive, got {v}")),
            None => s.required_note("n", "base dimension"),
        }
        match s.f64_list("bounds") {
            Some(list) => {
                if n > 0 && list.len() != 2 * n {
                    s.errors.push(format!(
                        "[domain] bounds needs {} numbers (a1, b1, ..), got {}",
                        2 * n,
                        list.len()
                    ));
                } else {
                    bounds = list.chunks(2).map(|c| (c[0], c[1])).collect();
                }
            }
            None => s.required_note("bounds", "per-axis interval endpoints"),
        }
        match s.usize_list("resolution") {
            Some(list) => {
                if n > 0 && list.len() != n {
                    s.errors.push(format!("[domain] resolution needs {n} entries, got {}", list.len()));
                } else {
                    resolution = list;
                }
            }
            None => s.required_note("resolution", "nodes per axis"),
        }
        s.finish(&sections);
    }

    // [function]
    let mut m = 0usize;
    let mut builtin = None;
    {
        let mut s = Section { name: "function", entries: sections.get("function"), seen: vec![], errors: &mut errors };
        match s.usize("m") {
            Some(v) if v >= 1 => m = v,
            Some(v) => s.errors.push(format!("[function] m must be positive, got {v}")),
            None => s.required_note("m", "codimension"),
        }
        let kind = s.raw("builtin").map(str::to_string);
        let matrix = s.f64_list("matrix");
        let q = s.f64_list("q");
        let linear = s.f64_list("linear");
        let constant = s.f64_list("constant");
        let amplitude_list = s.f64_list("amplitude");
        let frequency = s.f64_list("frequency");
        let modes = s.usize("modes");
        let tilt = s.f64_list("tilt");
        match kind.as_deref() {
            Some("zero") => builtin = Some(Builtin::Zero),
            Some("linear") => match &matrix {
                Some(mat) if n > 0 && m > 0 && mat.len() == n * m => {
                    builtin = Some(Builtin::Linear { matrix: mat.clone() })
                }
                Some(mat) => s.errors.push(format!(
                    "[function] matrix needs m*n = {} entries, got {}",
                    n * m,
                    mat.len()
                )),
                None => s.required_note("matrix", "row-major m x n coefficients for 'linear'"),
            },
            Some("quadratic") => match &q {
                Some(qv) if n > 0 && m > 0 && qv.len() == m * n * n => {
                    let mut symmetric = true;
                    for a in 0..m {
                        for i in 0..n {
                            for j in 0..n {
                                let x = qv[a * n * n + i * n + j];
                                let y = qv[a * n * n + j * n + i];
                                if (x - y).abs() > 1e-12 {
                                    symmetric = false;
                                }
                            }
                        }
                    }
                    if !symmetric {
                        s.errors.push("[function] q blocks must be symmetric".into());
                    } else {
                        if let Some(l) = &linear {
                            if l.len() != n * m {
                                s.errors.push(format!(
                                    "[function] linear needs m*n = {} entries, got {}",
                                    n * m,
                                    l.len()
                                ));
                            }
                        }
                        if let Some(b) = &constant {
                            if b.len() != m {
                                s.errors.push(format!(
                                    "[function] constant needs m = {m} entries, got {}",
                                    b.len()
                                ));
                            }
                        }
                        builtin = Some(Builtin::Quadratic {
                            q: qv.clone(),
                            linear: linear.clone(),
                            constant: constant.clone(),
                        });
                    }
                }
                Some(qv) => s.errors.push(format!(
                    "[function] q needs m*n*n = {} entries, got {}",
                    m * n * n,
                    qv.len()
                )),
                None => s.required_note("q", "row-major m blocks of n x n coefficients for 'quadratic'"),
            },
            Some("sinusoidal") => {
                let amplitude = amplitude_list.clone().unwrap_or_else(|| vec![1.0; m.max(1)]);
                let frequency = frequency.clone().unwrap_or_else(|| vec![1.0; n.max(1)]);
                if m > 0 && amplitude.len() != m {
                    s.errors.push(format!(
                        "[function] amplitude needs m = {m} entries, got {}",
                        amplitude.len()
                    ));
                } else if n > 0 && frequency.len() != n {
                    s.errors.push(format!(
                        "[function] frequency needs n = {n} entries, got {}",
                        frequency.len()
                    ));
                } else {
                    builtin = Some(Builtin::Sinusoidal { amplitude, frequency });
                }
            }
            Some("random_smooth") => {
                let amplitude = amplitude_list
                    .as_ref()
                    .map(|l| if l.len() == 1 { Some(l[0]) } else { None })
                    .unwrap_or(Some(1.0));
                if amplitude.is_none() {
                    s.errors.push("[function] amplitude must be a single number for 'random_smooth'".into());
                }
                if let Some(t) = &tilt {
                    if n > 0 && m > 0 && t.len() != n * m {
                        s.errors.push(format!(
                            "[function] tilt needs m*n = {} entries, got {}",
                            n * m,
                            t.len()
                        ));
                    }
                }
                builtin = Some(Builtin::RandomSmooth {
                    amplitude: amplitude.unwrap_or(1.0),
                    modes: modes.unwrap_or(2).max(1),
                    tilt: tilt.clone(),
                });
            }
            Some(other) => s.errors.push(format!(
                "[function] unknown builtin '{other}' (zero|linear|quadratic|sinusoidal|random_smooth)"
            )),
            None => s.required_note("builtin", "zero|linear|quadratic|sinusoidal|random_smooth"),
        }
        s.finish(&sections);
    }

    // [constants]
    let mut mode = CriterionMode::Slope;
    let mut seed = 0u64;
    let mut tol_eig_scale = 10.0;
    {
        let mut s = Section { name: "constants", entries: sections.get("constants"), seen: vec![], errors: &mut errors };
        if let Some(raw) = s.raw("mode") {
            match CriterionMode::parse(raw) {
                Ok(parsed) => mode = parsed,
                Err(e) => s.errors.push(format!("[constants] {e}")),
            }
        }
        if let Some(v) = s.u64("seed") {
            seed = v;
        }
        if let Some(v) = s.f64("tol_eig_scale") {
            tol_eig_scale = v;
        }
        s.finish(&sections);
    }

    // [flow]
    let mut flow = FlowSpec {
        dt_safety: 0.9,
        max_steps: 1_000_000,
        residual_target: 1e-8,
        omega_floor: 0.0,
        log_interval: 100,
        scaling: Scaling::Auto,
    };
    {
        let mut s = Section { name: "flow", entries: sections.get("flow"), seen: vec![], errors: &mut errors };
        if let Some(v) = s.f64("dt_safety") {
            if v > 0.0 && v <= 1.0 {
                flow.dt_safety = v;
            } else {
                s.errors.push(format!("[flow] dt_safety must lie in (0, 1], got {v}"));
            }
        }
        if let Some(v) = s.usize("max_steps") {
            flow.max_steps = v;
        }
        if let Some(v) = s.f64("residual_target") {
            flow.residual_target = v;
        }
        if let Some(v) = s.f64("omega_floor") {
            flow.omega_floor = v;
        }
        if let Some(v) = s.usize("log_interval") {
            flow.log_interval = v.max(1);
        }
        if let Some(raw) = s.raw("scaling") {
            flow.scaling = match raw {
                "auto" => Scaling::Auto,
                "none" => Scaling::None,
                other => match other.parse::<f64>() {
                    Ok(v) => Scaling::Factor(v),
                    Err(_) => {
                        s.errors
                            .push(format!("[flow] scaling: expected auto|none|<number>, got '{other}'"));
                        Scaling::Auto
                    }
                },
            };
        }
        s.finish(&sections);
    }

    // [algebra]
    let mut algebra = AlgebraSpec { count: 10_000, lambda_cap: None };
    {
        let mut s = Section { name: "algebra", entries: sections.get("algebra"), seen: vec![], errors: &mut errors };
        if let Some(v) = s.usize("count") {
            algebra.count = v;
        }
        if let Some(raw) = s.raw("lambda_cap") {
            if raw != "auto" {
                match raw.parse::<f64>() {
                    Ok(v) => algebra.lambda_cap = Some(v),
                    Err(_) => s
                        .errors
                        .push(format!("[algebra] lambda_cap: expected auto|<number>, got '{raw}'")),
                }
            }
        }
        s.finish(&sections);
    }

    // [output]
    let mut output = OutputSpec { dir: None, fixed_clock: false, write_fields: true };
    {
        let mut s = Section { name: "output", entries: sections.get("output"), seen: vec![], errors: &mut errors };
        if let Some(raw) = s.raw("dir") {
            output.dir = Some(raw.to_string());
        }
        if let Some(v) = s.bool("fixed_clock") {
            output.fixed_clock = v;
        }
        if let Some(v) = s.bool("write_fields") {
            output.write_fields = v;
        }
        s.finish(&sections);
    }

    if errors.is_empty() {
        Ok(RunConfig {
            domain: DomainSpec { n, bounds, resolution },
            function: FunctionSpec { m, builtin: builtin.expect("validated") },
            mode,
            seed,
            tol_eig_scale,
            flow,
            algebra,
            output,
        })
    } else {
        Err(errors)
    }
}
