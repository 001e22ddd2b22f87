//! Line-oriented `section.key = value` configuration: parsing, validation
//! with exhaustive error reporting (every problem, with its line number),
//! and defaulting with a record of which keys were defaulted.

use std::collections::BTreeMap;
use std::fmt;

/// Which workflow a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Time-integrate the kinetic equation and record the trajectory.
    Evolve,
    /// Block-variance ladder, limit classification, and probe decay.
    Fluct,
    /// Block/horizon regime scan of the finite-size variance correction.
    Scaling,
    /// Determinant rule against the dense few-mode representation.
    Oracle,
    /// Thermal parameters from density and energy targets.
    Equilibrium,
}

impl Scenario {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "evolve" => Some(Self::Evolve),
            "fluct" => Some(Self::Fluct),
            "scaling" => Some(Self::Scaling),
            "oracle" => Some(Self::Oracle),
            "equilibrium" => Some(Self::Equilibrium),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Evolve => "evolve",
            Self::Fluct => "fluct",
            Self::Scaling => "scaling",
            Self::Oracle => "oracle",
            Self::Equilibrium => "equilibrium",
        };
        write!(f, "{s}")
    }
}

/// Band energy choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandKind {
    /// Nearest-neighbor band `−Σ_a cos p_a`.
    Cosine,
}

/// Pair-potential choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    /// `Σ_a cos q_a`.
    Cosine,
    /// Constant value (its antisymmetrized matrix elements vanish).
    Constant(f64),
}

/// Kernel regularization choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Mollified,
    ExactShell,
}

/// Quadratic observable probed by the fluctuation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    /// Particle number at the origin (density fluctuations).
    Number,
    /// Nearest-neighbor hopping term; its interaction probe is nonzero.
    Hopping,
}

/// Mollifier width: explicit or derived from the band spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSpec {
    Auto,
    Fixed(f64),
}

/// Initial occupation of an evolve run / reference state of a diagnostic
/// run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateKind {
    /// Seeded uniform values in `[0.05, 0.95]`.
    Random,
    /// Thermal state at `(run.beta, run.mu)`.
    FermiDirac,
    /// Sharp sea filled up to `run.mu`.
    SharpSea,
    /// Flat occupation at the given density.
    Constant(f64),
}

/// Output formats to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub binary: bool,
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scenario: Scenario,
    // model block
    pub dim: usize,
    pub n: usize,
    pub band: BandKind,
    pub potential: PotentialKind,
    // params block
    pub lambda: f64,
    pub time_scale: f64,
    pub block: usize,
    pub eta: EtaSpec,
    pub mode: ModeKind,
    pub blocks: Vec<usize>,
    pub horizons: Vec<f64>,
    pub observable: ObservableKind,
    pub threshold_regular: Option<f64>,
    pub threshold_divergent: Option<f64>,
    // run block
    pub t_final: f64,
    pub dt: f64,
    pub monitor_every: usize,
    pub seed: u64,
    pub occupation: StateKind,
    pub beta: f64,
    pub mu: f64,
    pub rho: Option<f64>,
    pub energy: Option<f64>,
    pub cases: usize,
    // output block
    pub out_dir: String,
    pub formats: Formats,
    /// Keys that were not present and took their default value, sorted.
    pub defaulted: Vec<String>,
}

/// All configuration problems found, each tagged with the 1-based line it
/// was found on (line 0 for problems not tied to a line, e.g. missing
/// keys).
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<(usize, String)>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (line, msg)) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            if *line == 0 {
                write!(f, "config: {msg}")?;
            } else {
                write!(f, "config line {line}: {msg}")?;
            }
        }
        Ok(())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "model.dim",
    "model.n",
    "model.band",
    "model.potential",
    "params.lambda",
    "params.time_scale",
    "params.block",
    "params.eta",
    "params.mode",
    "params.blocks",
    "params.horizons",
    "params.observable",
    "params.threshold_regular",
    "params.threshold_divergent",
    "run.t_final",
    "run.dt",
    "run.monitor_every",
    "run.seed",
    "run.occupation",
    "run.beta",
    "run.mu",
    "run.rho",
    "run.energy",
    "run.cases",
    "output.dir",
    "output.formats",
];

/// Parses and validates a configuration text. On failure every problem is
/// reported, not just the first.
pub fn parse_config(text: &str) -> Result<RunSpec, ConfigErrors> {
    let mut errors: Vec<(usize, String)> = Vec::new();
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            errors.push((lineno, format!("expected `key = value`, got `{line}`")));
            continue;
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            errors.push((lineno, "empty key before `=`".into()));
            continue;
        }
        if value.is_empty() {
            errors.push((lineno, format!("key `{key}` has an empty value")));
            continue;
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            errors.push((lineno, format!("unknown key `{key}`")));
            continue;
        }
        if let Some((first, _)) = kv.get(&key) {
            errors.push((lineno, format!("key `{key}` already set on line {first}")));
            continue;
        }
        kv.insert(key, (lineno, value));
    }

    let mut defaulted: Vec<String> = Vec::new();

    // Typed accessors: consume a key, record defaults, accumulate errors.
    macro_rules! take {
        ($key:expr, $default:expr, $parse:expr) => {
            match kv.remove($key) {
                Some((line, value)) => match $parse(value.as_str()) {
                    Ok(v) => v,
                    Err(msg) => {
                        errors.push((line, format!("key `{}`: {}", $key, msg)));
                        $default
                    }
                },
                None => {
                    defaulted.push($key.to_string());
                    $default
                }
            }
        };
    }
    macro_rules! take_opt {
        ($key:expr, $parse:expr) => {
            match kv.remove($key) {
                Some((line, value)) => match $parse(value.as_str()) {
                    Ok(v) => Some(v),
                    Err(msg) => {
                        errors.push((line, format!("key `{}`: {}", $key, msg)));
                        None
                    }
                },
                None => None,
            }
        };
    }

    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| format!("`{s}` is not a nonnegative integer"));
    let parse_u64 = |s: &str| s.parse::<u64>().map_err(|_| format!("`{s}` is not a nonnegative integer"));
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let parse_usize_list = |s: &str| -> Result<Vec<usize>, String> {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a nonnegative integer")))
            .collect()
    };
    let parse_f64_list = |s: &str| -> Result<Vec<f64>, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
            .collect()
    };

    let scenario = match kv.remove("scenario") {
        Some((line, value)) => match Scenario::parse(&value) {
            Some(s) => Some(s),
            None => {
                errors.push((
                    line,
                    format!("unknown scenario `{value}` (expected evolve, fluct, scaling, oracle, or equilibrium)"),
                ));
                None
            }
        },
        None => {
            errors.push((0, "scenario missing".into()));
            None
        }
    };

    let dim = take!("model.dim", 2usize, parse_usize);
    let n = take!("model.n", 16usize, parse_usize);
    let band = take!("model.band", BandKind::Cosine, |s: &str| match s {
        "cosine" => Ok(BandKind::Cosine),
        other => Err(format!("unknown band `{other}` (expected cosine)")),
    });
    let potential = take!("model.potential", PotentialKind::Cosine, |s: &str| {
        if s == "cosine" {
            Ok(PotentialKind::Cosine)
        } else if let Some(rest) = s.strip_prefix("constant:") {
            rest.trim()
                .parse::<f64>()
                .map(PotentialKind::Constant)
                .map_err(|_| format!("`{rest}` is not a number"))
        } else {
            Err(format!("unknown potential `{s}` (expected cosine or constant:<value>)"))
        }
    });

    let lambda = take!("params.lambda", 1.0f64, parse_f64);
    let time_scale = take!("params.time_scale", (n as f64).powi(dim as i32), parse_f64);
    let block = take!("params.block", 4usize, parse_usize);
    let eta = take!("params.eta", EtaSpec::Auto, |s: &str| {
        if s == "auto" {
            Ok(EtaSpec::Auto)
        } else {
            s.parse::<f64>().map(EtaSpec::Fixed).map_err(|_| format!("`{s}` is not a number or `auto`"))
        }
    });
    let mode = take!("params.mode", ModeKind::Mollified, |s: &str| match s {
        "mollified" => Ok(ModeKind::Mollified),
        "exact-shell" => Ok(ModeKind::ExactShell),
        other => Err(format!("unknown mode `{other}` (expected mollified or exact-shell)")),
    });
    // Default block ladder n/16 < n/8 < n/4 < n/2, deduplicated: valid for
    // the block-variance constraint 2K ≤ n at any even n, and a sensible
    // ratio spread for regime scans.
    let default_blocks = || {
        let mut ks: Vec<usize> = [16usize, 8, 4, 2].iter().map(|d| (n / d).max(1)).collect();
        ks.dedup();
        ks
    };
    let blocks = take!("params.blocks", default_blocks(), parse_usize_list);
    let horizons = take!(
        "params.horizons",
        vec![16.0f64, 32.0, 64.0, 128.0],
        parse_f64_list
    );
    let observable = take!("params.observable", ObservableKind::Number, |s: &str| match s {
        "number" => Ok(ObservableKind::Number),
        "hopping" => Ok(ObservableKind::Hopping),
        other => Err(format!("unknown observable `{other}` (expected number or hopping)")),
    });
    let threshold_regular = take_opt!("params.threshold_regular", parse_f64);
    let threshold_divergent = take_opt!("params.threshold_divergent", parse_f64);

    let t_final = take!("run.t_final", 50.0f64, parse_f64);
    let dt = take!("run.dt", 0.01f64, parse_f64);
    let monitor_every = take!("run.monitor_every", 100usize, parse_usize);
    let seed = take!("run.seed", 42u64, parse_u64);
    let default_state = match scenario {
        Some(Scenario::Evolve) | None => StateKind::Random,
        _ => StateKind::FermiDirac,
    };
    let occupation = take!("run.occupation", default_state, |s: &str| {
        if s == "random" {
            Ok(StateKind::Random)
        } else if s == "fermi-dirac" {
            Ok(StateKind::FermiDirac)
        } else if s == "sharp-sea" {
            Ok(StateKind::SharpSea)
        } else if let Some(rest) = s.strip_prefix("constant:") {
            rest.trim()
                .parse::<f64>()
                .map(StateKind::Constant)
                .map_err(|_| format!("`{rest}` is not a number"))
        } else {
            Err(format!(
                "unknown occupation `{s}` (expected random, fermi-dirac, sharp-sea, or constant:<density>)"
            ))
        }
    });
    let beta = take!("run.beta", 1.0f64, parse_f64);
    let mu = take!("run.mu", 0.0f64, parse_f64);
    let rho = take_opt!("run.rho", parse_f64);
    let energy = take_opt!("run.energy", parse_f64);
    let cases = take!("run.cases", 20usize, parse_usize);

    let out_dir = take!("output.dir", "out".to_string(), |s: &str| Ok::<_, String>(s.to_string()));
    let formats = take!(
        "output.formats",
        Formats { csv: true, json: true, binary: false },
        |s: &str| {
            let mut f = Formats { csv: false, json: false, binary: false };
            for part in s.split(',') {
                match part.trim() {
                    "csv" => f.csv = true,
                    "json" => f.json = true,
                    "binary" => f.binary = true,
                    other => return Err(format!("unknown format `{other}` (expected csv, json, binary)")),
                }
            }
            if !f.csv && !f.json && !f.binary {
                return Err("no formats selected".into());
            }
            Ok(f)
        }
    );

    // Anything left in `kv` is unreachable because unknown keys were
    // rejected at scan time; still, guard against schema drift.
    for (key, (line, _)) in kv {
        errors.push((line, format!("unhandled key `{key}`")));
    }

    // Semantic validation.
    if dim != 1 && dim != 2 {
        errors.push((0, format!("model.dim must be 1 or 2, got {dim}")));
    }
    if n < 2 || n % 2 != 0 {
        errors.push((0, format!("model.n must be an even integer ≥ 2, got {n}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        errors.push((0, format!("params.lambda must be a finite nonnegative number, got {lambda}")));
    }
    if !(time_scale > 0.0) || !time_scale.is_finite() {
        errors.push((0, format!("params.time_scale must be positive, got {time_scale}")));
    }
    if block == 0 {
        errors.push((0, "params.block must be at least 1".into()));
    }
    if let EtaSpec::Fixed(e) = eta {
        if !(e > 0.0) || !e.is_finite() {
            errors.push((0, format!("params.eta must be positive, got {e}")));
        }
    }
    if blocks.is_empty() {
        errors.push((0, "params.blocks must not be empty".into()));
    }
    if horizons.is_empty() {
        errors.push((0, "params.horizons must not be empty".into()));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        errors.push((0, format!("run.t_final must be positive, got {t_final}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        errors.push((0, format!("run.dt must be positive, got {dt}")));
    }
    if let StateKind::Constant(r) = occupation {
        if !(0.0..=1.0).contains(&r) {
            errors.push((0, format!("run.occupation constant density must lie in [0, 1], got {r}")));
        }
    }
    if threshold_regular.is_some() != threshold_divergent.is_some() {
        errors.push((
            0,
            "params.threshold_regular and params.threshold_divergent must be given together".into(),
        ));
    }
    if scenario == Some(Scenario::Equilibrium) {
        if rho.is_none() {
            errors.push((0, "equilibrium scenario needs run.rho".into()));
        }
        if energy.is_none() {
            errors.push((0, "equilibrium scenario needs run.energy".into()));
        }
    }
    if scenario == Some(Scenario::Oracle) {
        if n > 10 {
            errors.push((0, format!("oracle scenario needs model.n ≤ 10 (dense representation), got {n}")));
        }
        if dim != 1 {
            errors.push((0, "oracle scenario needs model.dim = 1".into()));
        }
        if cases == 0 {
            errors.push((0, "run.cases must be at least 1".into()));
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|(line, _)| *line);
        return Err(ConfigErrors(errors));
    }
    defaulted.sort();

    Ok(RunSpec {
        scenario: scenario.expect("scenario presence checked above"),
        dim,
        n,
        band,
        potential,
        lambda,
        time_scale,
        block,
        eta,
        mode,
        blocks,
        horizons,
        observable,
        threshold_regular,
        threshold_divergent,
        t_final,
        dt,
        monitor_every,
        seed,
        occupation,
        beta,
        mu,
        rho,
        energy,
        cases,
        out_dir,
        formats,
        defaulted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_reports_missing_scenario() {
        let err = parse_config("").unwrap_err();
        assert!(err.0.iter().any(|(_, m)| m.contains("scenario missing")));
    }

    #[test]
    fn minimal_config_echoes_defaults() {
        let spec = parse_config("scenario = evolve\n").unwrap();
        assert_eq!(spec.scenario, Scenario::Evolve);
        assert_eq!(spec.dim, 2);
        assert_eq!(spec.n, 16);
        assert!(spec.defaulted.iter().any(|k| k == "run.dt"));
        assert!(spec.defaulted.iter().any(|k| k == "model.n"));
    }

    #[test]
    fn odd_n_names_the_evenness_constraint() {
        let err = parse_config("scenario = evolve\nmodel.n = 15\n").unwrap_err();
        assert!(err.0.iter().any(|(_, m)| m.contains("even")));
    }

    #[test]
    fn all_errors_reported_with_line_numbers() {
        let text = "scenario = warp\nmodel.n = pancake\nbogus.key = 1\nmodel.n = 8\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|(l, _)| *l).collect();
        assert!(lines.contains(&1), "bad scenario on line 1: {err}");
        assert!(lines.contains(&2), "bad integer on line 2: {err}");
        assert!(lines.contains(&3), "unknown key on line 3: {err}");
        assert!(lines.contains(&4), "duplicate key on line 4: {err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a run\nscenario = fluct\n\nmodel.dim = 1 # one axis\nmodel.n = 32\n";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.scenario, Scenario::Fluct);
        assert_eq!(spec.dim, 1);
        assert_eq!(spec.n, 32);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("scenario = evolve\nrun.dt = 0.1\nrun.dt = 0.2\n").unwrap_err();
        assert!(err.0.iter().any(|(l, m)| *l == 3 && m.contains("already set on line 2")));
    }

    #[test]
    fn default_block_ladder_derives_from_n() {
        let spec = parse_config("scenario = fluct\n").unwrap();
        assert_eq!(spec.n, 16);
        assert_eq!(spec.blocks, vec![1, 2, 4, 8]);
        let spec = parse_config("scenario = fluct\nmodel.n = 256\n").unwrap();
        assert_eq!(spec.blocks, vec![16, 32, 64, 128]);
    }

    #[test]
    fn lists_parse() {
        let spec = parse_config(
            "scenario = scaling\nparams.blocks = 8, 16, 32\nparams.horizons = 8, 16.5\n",
        )
        .unwrap();
        assert_eq!(spec.blocks, vec![8, 16, 32]);
        assert_eq!(spec.horizons, vec![8.0, 16.5]);
    }
}
