//! Plain-text configuration files.
//!
//! The format is deliberately minimal: `[section]` headers, one `key = value`
//! pair per line, `#`/`;` full-line comments, blank lines ignored. The parser
//! accepts arbitrary text without panicking and reports malformed input with
//! line numbers; the typed layer on top resolves per-case defaults and
//! validates cross-field invariants.
//!
//! ```text
//! [run]
//! case     = vortex
//! scheme   = es-c
//! p        = 3
//! elements = 4
//!
//! [sweep]
//! grids = 1x4 1x8 1x12 3x2 3x4 3x6
//! ```

use crate::fluxes::Scheme;
use crate::{Error, Result};
use std::path::PathBuf;

// ---------------------------------------------------------------------------
// Raw sectioned key/value layer
// ---------------------------------------------------------------------------

/// One parsed `key = value` with its source line (1-based, for diagnostics).
#[derive(Clone, Debug)]
pub struct RawEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// One `[section]` with its entries in file order.
#[derive(Clone, Debug)]
pub struct RawSection {
    pub name: String,
    pub entries: Vec<RawEntry>,
}

/// Parse the sectioned key/value text without interpreting any values.
///
/// Rejected: content before the first section header, malformed headers,
/// lines without `=`, empty keys or values, duplicate keys within a section,
/// duplicate section names.
pub fn parse_raw(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| fmt_err(line_no, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(fmt_err(line_no, "empty section name"));
            }
            if !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(fmt_err(line_no, "section names use [a-zA-Z0-9_-] only"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(fmt_err(line_no, &format!("duplicate section [{name}]")));
            }
            sections.push(RawSection { name: name.to_string(), entries: Vec::new() });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| fmt_err(line_no, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(fmt_err(line_no, "empty key"));
        }
        if value.is_empty() {
            return Err(fmt_err(line_no, &format!("key `{key}` has an empty value")));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| fmt_err(line_no, "key/value pair before any [section]"))?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(fmt_err(
                line_no,
                &format!("duplicate key `{key}` in section [{}]", section.name),
            ));
        }
        section.entries.push(RawEntry {
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
        });
    }
    Ok(sections)
}

fn fmt_err(line: usize, msg: &str) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn cfg_err(line: usize, msg: &str) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

/// Flow scenario selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Vortex,
    Mms,
    Tgv,
    Chit,
    Freestream,
}

impl CaseKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CaseKind::Vortex => "vortex",
            CaseKind::Mms => "mms",
            CaseKind::Tgv => "tgv",
            CaseKind::Chit => "chit",
            CaseKind::Freestream => "freestream",
        }
    }

    pub fn parse(s: &str) -> Option<CaseKind> {
        match s {
            "vortex" => Some(CaseKind::Vortex),
            "mms" => Some(CaseKind::Mms),
            "tgv" => Some(CaseKind::Tgv),
            "chit" => Some(CaseKind::Chit),
            "freestream" => Some(CaseKind::Freestream),
            _ => None,
        }
    }
}

/// Case-specific physical parameters with their defaults resolved.
#[derive(Clone, Copy, Debug)]
pub struct CaseParams {
    /// Advection/background Mach number (vortex, tgv).
    pub mach: f64,
    /// Vortex strength.
    pub beta: f64,
    /// Reynolds number (tgv, mms).
    pub reynolds: f64,
    /// Turbulent Mach number (chit).
    pub mach_t: f64,
    /// Target microscale Reynolds number (chit).
    pub re_lambda: f64,
    /// Spectrum peak wavenumber (chit).
    pub k0: f64,
    /// Synthesis cutoff shell (chit).
    pub k_syn: usize,
    /// Spectrum amplitude (chit).
    pub a0: f64,
}

/// Everything one run needs; also the per-member template for sweeps and
/// robustness matrices.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub case: CaseKind,
    pub scheme: Scheme,
    pub p: usize,
    pub elements: [usize; 3],
    pub viscous: bool,
    pub dissipation: bool,
    pub c_diss: f64,
    pub c_ip: Option<f64>,
    pub atol: f64,
    pub rtol: f64,
    /// `None` keeps the case's own default horizon.
    pub t_final: Option<f64>,
    pub seed: u64,
    pub output: PathBuf,
    /// Field-dump cadence in accepted steps; 0 disables dumps.
    pub dump_every: usize,
    pub max_steps: usize,
    /// Mesh warp amplitude; 0 keeps the grid Cartesian.
    pub warp: f64,
    pub params: CaseParams,
}

/// Convergence-sweep request: a shared template plus (p, K) grid pairs.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub grids: Vec<(usize, usize)>,
    /// When set, a fitted order below `p − 0.3` fails the sweep.
    pub assert_order: bool,
}

/// Robustness-matrix request.
#[derive(Clone, Debug)]
pub struct RobustnessSpec {
    pub schemes: Vec<Scheme>,
    pub p_list: Vec<usize>,
    pub k_list: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Run matrix members concurrently instead of sequentially.
    pub parallel: bool,
}

/// Parse and validate a single-run configuration (requires `[run]`).
pub fn load_run(text: &str) -> Result<RunConfig> {
    let sections = parse_raw(text)?;
    check_sections(&sections)?;
    build_run(&sections)
}

/// Parse a sweep configuration (requires `[run]` as template and `[sweep]`).
pub fn load_sweep(text: &str) -> Result<(RunConfig, SweepSpec)> {
    let sections = parse_raw(text)?;
    check_sections(&sections)?;
    let run = build_run(&sections)?;
    let sweep = section(&sections, "sweep")
        .ok_or_else(|| Error::Config("sweep mode needs a [sweep] section".into()))?;
    let spec = build_sweep(sweep)?;
    Ok((run, spec))
}

/// Parse a robustness-matrix configuration (requires `[run]` and
/// `[robustness]`; the case must be one of the turbulent scenarios).
pub fn load_robustness(text: &str) -> Result<(RunConfig, RobustnessSpec)> {
    let sections = parse_raw(text)?;
    check_sections(&sections)?;
    let run = build_run(&sections)?;
    if !matches!(run.case, CaseKind::Tgv | CaseKind::Chit) {
        return Err(Error::Config(format!(
            "robustness matrices are defined for the turbulent cases (tgv, chit), not `{}`",
            run.case.tag()
        )));
    }
    let rob = section(&sections, "robustness")
        .ok_or_else(|| Error::Config("robustness mode needs a [robustness] section".into()))?;
    let spec = build_robustness(rob, &run)?;
    Ok((run, spec))
}

fn check_sections(sections: &[RawSection]) -> Result<()> {
    for s in sections {
        if !matches!(s.name.as_str(), "run" | "sweep" | "robustness") {
            return Err(Error::Config(format!(
                "unknown section [{}] (expected [run], [sweep], [robustness])",
                s.name
            )));
        }
    }
    Ok(())
}

fn section<'a>(sections: &'a [RawSection], name: &str) -> Option<&'a RawSection> {
    sections.iter().find(|s| s.name == name)
}

// -- value parsers ----------------------------------------------------------

fn parse_f64(e: &RawEntry) -> Result<f64> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| cfg_err(e.line, &format!("`{}` expects a number, got `{}`", e.key, e.value)))?;
    if !v.is_finite() {
        return Err(cfg_err(e.line, &format!("`{}` must be finite", e.key)));
    }
    Ok(v)
}

fn parse_usize(e: &RawEntry) -> Result<usize> {
    e.value.parse().map_err(|_| {
        cfg_err(
            e.line,
            &format!("`{}` expects a nonnegative integer, got `{}`", e.key, e.value),
        )
    })
}

fn parse_u64(e: &RawEntry) -> Result<u64> {
    e.value.parse().map_err(|_| {
        cfg_err(
            e.line,
            &format!("`{}` expects a nonnegative integer, got `{}`", e.key, e.value),
        )
    })
}

fn parse_bool(e: &RawEntry) -> Result<bool> {
    match e.value.as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(
            e.line,
            &format!("`{}` expects on/off, got `{}`", e.key, e.value),
        )),
    }
}

// -- [run] ------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tristate {
    Auto,
    On,
    Off,
}

fn build_run(sections: &[RawSection]) -> Result<RunConfig> {
    let run = section(sections, "run")
        .ok_or_else(|| Error::Config("configuration needs a [run] section".into()))?;

    // First pass: the case decides which keys apply and what defaults hold.
    let case_entry = run
        .entries
        .iter()
        .find(|e| e.key == "case")
        .ok_or_else(|| Error::Config("[run] must set `case`".into()))?;
    let case = CaseKind::parse(&case_entry.value).ok_or_else(|| {
        cfg_err(
            case_entry.line,
            &format!(
                "unknown case `{}` (expected vortex, mms, tgv, chit, freestream)",
                case_entry.value
            ),
        )
    })?;

    let mut cfg = RunConfig {
        case,
        scheme: Scheme::EsChandrashekar,
        p: 3,
        elements: [4; 3],
        viscous: default_viscous(case),
        dissipation: true,
        c_diss: 1.0,
        c_ip: None,
        atol: 1e-8,
        rtol: 1e-6,
        t_final: None,
        seed: 1,
        output: PathBuf::from("out"),
        dump_every: 0,
        max_steps: 1_000_000,
        warp: if case == CaseKind::Freestream { 0.08 } else { 0.0 },
        params: CaseParams {
            mach: if case == CaseKind::Tgv { 0.05 } else { 0.5 },
            beta: 5.0,
            reynolds: if case == CaseKind::Mms { 4.0e6 } else { 1600.0 },
            mach_t: 0.62,
            re_lambda: 194.0,
            k0: 8.0,
            k_syn: 16,
            a0: 0.00013,
        },
    };
    let mut viscous = Tristate::Auto;

    for e in &run.entries {
        match e.key.as_str() {
            "case" => {}
            "scheme" => {
                cfg.scheme = Scheme::parse(&e.value).ok_or_else(|| {
                    cfg_err(
                        e.line,
                        &format!("unknown scheme `{}` (expected es-c, sf-kg, dc)", e.value),
                    )
                })?;
            }
            "p" => cfg.p = parse_usize(e)?,
            "elements" => cfg.elements = parse_elements(e)?,
            "viscous" => {
                viscous = match e.value.as_str() {
                    "auto" => Tristate::Auto,
                    "on" | "true" | "yes" | "1" => Tristate::On,
                    "off" | "false" | "no" | "0" => Tristate::Off,
                    _ => {
                        return Err(cfg_err(
                            e.line,
                            &format!("`viscous` expects auto/on/off, got `{}`", e.value),
                        ))
                    }
                };
            }
            "dissipation" => cfg.dissipation = parse_bool(e)?,
            "c_diss" => cfg.c_diss = parse_f64(e)?,
            "c_ip" => {
                cfg.c_ip = if e.value == "auto" { None } else { Some(parse_f64(e)?) };
            }
            "atol" => cfg.atol = parse_f64(e)?,
            "rtol" => cfg.rtol = parse_f64(e)?,
            "t_final" => {
                cfg.t_final = if e.value == "auto" { None } else { Some(parse_f64(e)?) };
            }
            "seed" => cfg.seed = parse_u64(e)?,
            "output" => cfg.output = PathBuf::from(&e.value),
            "dump_every" => cfg.dump_every = parse_usize(e)?,
            "max_steps" => cfg.max_steps = parse_usize(e)?,
            "warp" => cfg.warp = parse_f64(e)?,
            "mach" => {
                require_case(e, case, &[CaseKind::Vortex, CaseKind::Tgv])?;
                cfg.params.mach = parse_f64(e)?;
            }
            "beta" => {
                require_case(e, case, &[CaseKind::Vortex])?;
                cfg.params.beta = parse_f64(e)?;
            }
            "reynolds" => {
                require_case(e, case, &[CaseKind::Tgv, CaseKind::Mms])?;
                cfg.params.reynolds = parse_f64(e)?;
            }
            "mach_t" => {
                require_case(e, case, &[CaseKind::Chit])?;
                cfg.params.mach_t = parse_f64(e)?;
            }
            "re_lambda" => {
                require_case(e, case, &[CaseKind::Chit])?;
                cfg.params.re_lambda = parse_f64(e)?;
            }
            "k0" => {
                require_case(e, case, &[CaseKind::Chit])?;
                cfg.params.k0 = parse_f64(e)?;
            }
            "k_syn" => {
                require_case(e, case, &[CaseKind::Chit])?;
                cfg.params.k_syn = parse_usize(e)?;
            }
            "a0" => {
                require_case(e, case, &[CaseKind::Chit])?;
                cfg.params.a0 = parse_f64(e)?;
            }
            other => {
                return Err(cfg_err(e.line, &format!("unknown key `{other}` in [run]")));
            }
        }
    }

    // Resolve the viscous tri-state against the case.
    cfg.viscous = match (viscous, case) {
        (Tristate::Auto, c) => default_viscous(c),
        (Tristate::On, CaseKind::Vortex) => {
            return Err(Error::Config(
                "the vortex case is inviscid by definition; `viscous = on` is invalid".into(),
            ))
        }
        (Tristate::Off, CaseKind::Mms) => {
            return Err(Error::Config(
                "the manufactured solution forces viscous terms on (its source includes them)"
                    .into(),
            ))
        }
        (Tristate::On, CaseKind::Freestream) => {
            return Err(Error::Config(
                "the free-stream case has no viscosity scale; `viscous = on` is invalid".into(),
            ))
        }
        (Tristate::On, _) => true,
        (Tristate::Off, _) => false,
    };

    validate_run(&cfg)?;
    Ok(cfg)
}

fn default_viscous(case: CaseKind) -> bool {
    match case {
        CaseKind::Vortex | CaseKind::Freestream => false,
        CaseKind::Mms | CaseKind::Tgv | CaseKind::Chit => true,
    }
}

fn require_case(e: &RawEntry, case: CaseKind, allowed: &[CaseKind]) -> Result<()> {
    if allowed.contains(&case) {
        Ok(())
    } else {
        Err(cfg_err(
            e.line,
            &format!("key `{}` does not apply to case `{}`", e.key, case.tag()),
        ))
    }
}

fn parse_elements(e: &RawEntry) -> Result<[usize; 3]> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    let parse = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| {
            cfg_err(
                e.line,
                &format!("`elements` expects integers, got `{}`", e.value),
            )
        })
    };
    match parts.as_slice() {
        [k] => {
            let k = parse(k)?;
            Ok([k; 3])
        }
        [a, b, c] => Ok([parse(a)?, parse(b)?, parse(c)?]),
        _ => Err(cfg_err(
            e.line,
            "`elements` expects one integer (cube) or three (per direction)",
        )),
    }
}

fn validate_run(cfg: &RunConfig) -> Result<()> {
    if cfg.p < 1 || cfg.p > 15 {
        return Err(Error::Config(format!(
            "polynomial degree p = {} out of the supported range 1..=15",
            cfg.p
        )));
    }
    for (d, &k) in cfg.elements.iter().enumerate() {
        if k < 1 || k > 128 {
            return Err(Error::Config(format!(
                "elements[{d}] = {k} out of the supported range 1..=128"
            )));
        }
    }
    if cfg.atol <= 0.0 || cfg.rtol <= 0.0 {
        return Err(Error::Config("atol and rtol must be positive".into()));
    }
    if let Some(t) = cfg.t_final {
        if t <= 0.0 {
            return Err(Error::Config("t_final must be positive".into()));
        }
    }
    if cfg.max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    if cfg.c_diss < 0.0 {
        return Err(Error::Config("c_diss must be nonnegative".into()));
    }
    if let Some(c) = cfg.c_ip {
        if c < 0.0 {
            return Err(Error::Config("c_ip must be nonnegative".into()));
        }
    }
    if !(0.0..0.5).contains(&cfg.warp) {
        return Err(Error::Config(format!(
            "warp amplitude {} outside [0, 0.5) keeps no valid mesh",
            cfg.warp
        )));
    }
    let pm = &cfg.params;
    if pm.mach <= 0.0 || pm.reynolds <= 0.0 || pm.mach_t <= 0.0 || pm.re_lambda <= 0.0 {
        return Err(Error::Config(
            "mach, reynolds, mach_t, re_lambda must be positive".into(),
        ));
    }
    if pm.beta <= 0.0 || pm.k0 <= 0.0 || pm.a0 <= 0.0 {
        return Err(Error::Config("beta, k0, a0 must be positive".into()));
    }
    if cfg.case == CaseKind::Chit && (pm.k_syn as f64) < pm.k0 {
        return Err(Error::Config(format!(
            "synthesis cutoff k_syn = {} cannot contain the spectrum peak k0 = {}",
            pm.k_syn, pm.k0
        )));
    }
    Ok(())
}

// -- [sweep] ----------------------------------------------------------------

fn build_sweep(s: &RawSection) -> Result<SweepSpec> {
    let mut grids: Option<Vec<(usize, usize)>> = None;
    let mut assert_order = false;
    for e in &s.entries {
        match e.key.as_str() {
            "grids" => {
                let mut list = Vec::new();
                for item in e.value.split_whitespace() {
                    let (p, k) = item.split_once('x').ok_or_else(|| {
                        cfg_err(
                            e.line,
                            &format!("grid `{item}` should look like `3x8` (p x elements)"),
                        )
                    })?;
                    let p: usize = p.parse().map_err(|_| {
                        cfg_err(e.line, &format!("bad degree in grid `{item}`"))
                    })?;
                    let k: usize = k.parse().map_err(|_| {
                        cfg_err(e.line, &format!("bad element count in grid `{item}`"))
                    })?;
                    if p < 1 || p > 15 || k < 1 || k > 128 {
                        return Err(cfg_err(e.line, &format!("grid `{item}` out of range")));
                    }
                    list.push((p, k));
                }
                grids = Some(list);
            }
            "assert_order" => assert_order = parse_bool(e)?,
            other => {
                return Err(cfg_err(e.line, &format!("unknown key `{other}` in [sweep]")));
            }
        }
    }
    let grids = grids.ok_or_else(|| Error::Config("[sweep] must set `grids`".into()))?;
    if grids.is_empty() {
        return Err(Error::Config("[sweep] grids list is empty".into()));
    }
    // Order estimation needs at least two distinct grids per degree.
    let mut degrees: Vec<usize> = grids.iter().map(|g| g.0).collect();
    degrees.sort_unstable();
    degrees.dedup();
    for p in degrees {
        let mut ks: Vec<usize> = grids.iter().filter(|g| g.0 == p).map(|g| g.1).collect();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() < 2 {
            return Err(Error::Config(format!(
                "degree p = {p} has fewer than two distinct grids; order cannot be estimated"
            )));
        }
    }
    Ok(SweepSpec { grids, assert_order })
}

// -- [robustness] -----------------------------------------------------------

fn build_robustness(s: &RawSection, run: &RunConfig) -> Result<RobustnessSpec> {
    let mut spec = RobustnessSpec {
        schemes: vec![
            Scheme::EsChandrashekar,
            Scheme::SfKennedyGruber,
            Scheme::DivergenceCollocation,
        ],
        p_list: vec![run.p],
        k_list: vec![run.elements[0]],
        seeds: vec![run.seed],
        parallel: false,
    };
    for e in &s.entries {
        match e.key.as_str() {
            "schemes" => {
                let mut list = Vec::new();
                for item in e.value.split_whitespace() {
                    let sch = Scheme::parse(item)
                        .ok_or_else(|| cfg_err(e.line, &format!("unknown scheme `{item}`")))?;
                    if list.contains(&sch) {
                        return Err(cfg_err(e.line, &format!("scheme `{item}` listed twice")));
                    }
                    list.push(sch);
                }
                if list.is_empty() {
                    return Err(cfg_err(e.line, "`schemes` list is empty"));
                }
                spec.schemes = list;
            }
            "p" => {
                spec.p_list = parse_int_list(e, 1, 15)?;
            }
            "elements" => {
                spec.k_list = parse_int_list(e, 1, 128)?;
            }
            "seeds" => {
                let mut list = Vec::new();
                for item in e.value.split_whitespace() {
                    list.push(item.parse::<u64>().map_err(|_| {
                        cfg_err(e.line, &format!("bad seed `{item}` (expects integers)"))
                    })?);
                }
                if list.is_empty() {
                    return Err(cfg_err(e.line, "`seeds` list is empty"));
                }
                spec.seeds = list;
            }
            "parallel" => spec.parallel = parse_bool(e)?,
            other => {
                return Err(cfg_err(
                    e.line,
                    &format!("unknown key `{other}` in [robustness]"),
                ));
            }
        }
    }
    Ok(spec)
}

fn parse_int_list(e: &RawEntry, lo: usize, hi: usize) -> Result<Vec<usize>> {
    let mut list = Vec::new();
    for item in e.value.split_whitespace() {
        let v: usize = item
            .parse()
            .map_err(|_| cfg_err(e.line, &format!("bad integer `{item}` in `{}`", e.key)))?;
        if v < lo || v > hi {
            return Err(cfg_err(
                e.line,
                &format!("`{}` value {v} out of range {lo}..={hi}", e.key),
            ));
        }
        if list.contains(&v) {
            return Err(cfg_err(e.line, &format!("`{}` value {v} listed twice", e.key)));
        }
        list.push(v);
    }
    if list.is_empty() {
        return Err(cfg_err(e.line, &format!("`{}` list is empty", e.key)));
    }
    Ok(list)
}
