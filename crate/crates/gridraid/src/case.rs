//! Line-oriented case files.
//!
//! ```text
//! baseMVA 100
//! bus 1 ref
//! bus 2
//! line 1 1 2 0.05917
//! meas flow_from 1 sigma 0.02
//! meas inj 2
//! fullplacement sigma 0.02
//! ```
//!
//! `#` starts a comment. `fullplacement` meters every flow (both ends) and
//! every injection and cannot be combined with `meas` lines.

use std::path::Path;

use gridraid_core::grid::{BusId, LineId, MeasurementPlacement, NetworkModel, DEFAULT_SIGMA};

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid case: {0}")]
    Validation(#[from] gridraid_core::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Case {
    pub network: NetworkModel,
    pub placement: MeasurementPlacement,
}

enum MeasKind {
    From,
    To,
    Inj,
}

fn parse_err(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<T, CaseError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

/// `[sigma <float>]` trailer.
fn sigma_trailer<'a>(mut rest: impl Iterator<Item = &'a str>, line: usize) -> Result<Option<f64>, CaseError> {
    match rest.next() {
        None => Ok(None),
        Some("sigma") => {
            let s: f64 = number(rest.next(), "sigma", line)?;
            if let Some(extra) = rest.next() {
                return Err(parse_err(line, format!("unexpected token '{extra}'")));
            }
            Ok(Some(s))
        }
        Some(tok) => Err(parse_err(line, format!("unexpected token '{tok}'"))),
    }
}

pub fn parse_case(text: &str) -> Result<Case, CaseError> {
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut reference = None;
    let mut lines = Vec::new();
    let mut meas: Vec<(MeasKind, u32, Option<f64>)> = Vec::new();
    let mut full: Option<(usize, Option<f64>)> = None;
    let mut first_meas_line = None;

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(keyword) = toks.next() else { continue };
        match keyword {
            "baseMVA" => {
                if base_mva.is_some() {
                    return Err(parse_err(ln, "baseMVA given twice"));
                }
                base_mva = Some(number::<f64>(toks.next(), "base power", ln)?);
                if let Some(extra) = toks.next() {
                    return Err(parse_err(ln, format!("unexpected token '{extra}'")));
                }
            }
            "bus" => {
                let id: u32 = number(toks.next(), "bus id", ln)?;
                match toks.next() {
                    None => {}
                    Some("ref") => {
                        if reference.is_some() {
                            return Err(parse_err(ln, "more than one reference bus"));
                        }
                        reference = Some(BusId(id));
                    }
                    Some(tok) => return Err(parse_err(ln, format!("unexpected token '{tok}'"))),
                }
                if let Some(extra) = toks.next() {
                    return Err(parse_err(ln, format!("unexpected token '{extra}'")));
                }
                buses.push(BusId(id));
            }
            "line" => {
                let id: u32 = number(toks.next(), "line id", ln)?;
                let from: u32 = number(toks.next(), "from bus", ln)?;
                let to: u32 = number(toks.next(), "to bus", ln)?;
                let reactance: f64 = number(toks.next(), "reactance", ln)?;
                if let Some(extra) = toks.next() {
                    return Err(parse_err(ln, format!("unexpected token '{extra}'")));
                }
                lines.push(gridraid_core::grid::Line {
                    id: LineId(id),
                    from: BusId(from),
                    to: BusId(to),
                    reactance,
                });
            }
            "meas" => {
                let kind = match toks.next() {
                    Some("flow_from") => MeasKind::From,
                    Some("flow_to") => MeasKind::To,
                    Some("inj") => MeasKind::Inj,
                    Some(tok) => return Err(parse_err(ln, format!("unknown measurement kind '{tok}'"))),
                    None => return Err(parse_err(ln, "missing measurement kind")),
                };
                let id: u32 = number(toks.next(), "device id", ln)?;
                let sigma = sigma_trailer(toks, ln)?;
                first_meas_line.get_or_insert(ln);
                meas.push((kind, id, sigma));
            }
            "fullplacement" => {
                if full.is_some() {
                    return Err(parse_err(ln, "fullplacement given twice"));
                }
                full = Some((ln, sigma_trailer(toks, ln)?));
            }
            other => return Err(parse_err(ln, format!("unknown keyword '{other}'"))),
        }
    }

    if let (Some((ln, _)), Some(_)) = (full, first_meas_line) {
        return Err(parse_err(ln, "fullplacement cannot be combined with meas lines"));
    }
    let reference = reference.ok_or_else(|| {
        gridraid_core::Error::Validation("no bus is marked as the reference".into())
    })?;
    let network = NetworkModel::new(buses, reference, lines, base_mva.unwrap_or(100.0))?;

    let placement = match full {
        Some((_, sigma)) => MeasurementPlacement::full(&network, sigma.unwrap_or(DEFAULT_SIGMA))?,
        None => {
            let (mut from, mut to, mut inj) = (Vec::new(), Vec::new(), Vec::new());
            let (mut sf, mut st, mut si) = (Vec::new(), Vec::new(), Vec::new());
            for (kind, id, sigma) in meas {
                let s = sigma.unwrap_or(DEFAULT_SIGMA);
                match kind {
                    MeasKind::From => {
                        from.push(LineId(id));
                        sf.push(s);
                    }
                    MeasKind::To => {
                        to.push(LineId(id));
                        st.push(s);
                    }
                    MeasKind::Inj => {
                        inj.push(BusId(id));
                        si.push(s);
                    }
                }
            }
            let sigmas: Vec<f64> = sf.into_iter().chain(st).chain(si).collect();
            MeasurementPlacement::new(&network, &from, &to, &inj, &sigmas)?
        }
    };
    Ok(Case { network, placement })
}

pub fn load_case(path: &Path) -> Result<(Case, String), CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((parse_case(&text)?, text))
}
