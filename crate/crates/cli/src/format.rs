//! On-disk formats.
//!
//! Dataset files are plain text:
//!
//! ```text
//! # comments and blank lines are ignored
//! dim 3
//! families germanic romance
//! languages en:germanic de:germanic fr:romance
//! encodings phone video
//! speakers spk1 spk2            (optional)
//! data
//! 0.5,-1.25,3,en,phone
//! 0.25,0,1e-3,fr,video,spk2
//! ```
//!
//! `families` may be omitted, in which case families are ordered by first
//! appearance in `languages`. Feature values are written with Rust's
//! shortest round-trip formatting, so write → load is bit-exact.
//!
//! Checkpoints are a text manifest terminated by `params N`, followed by
//! exactly `N` little-endian `f64` values in [`HausModel::parameters`] order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use staircase_core::haus::Coupling;
use staircase_core::net::{LinearLayer, Mlp};
use staircase_core::{Dataset, HausModel, Sample, Taxonomy};

use crate::error::{CliError, Result};

pub const CHECKPOINT_MAGIC: &str = "staircase-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn check_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(|c: char| c.is_whitespace() || c == ',' || c == ':')
}

fn taxonomy_header(t: &Taxonomy) -> String {
    let mut s = String::new();
    s.push_str(&format!("families {}\n", t.families().join(" ")));
    let pairs: Vec<String> = t
        .languages()
        .iter()
        .enumerate()
        .map(|(l, name)| format!("{name}:{}", t.families()[t.family_map()[l]]))
        .collect();
    s.push_str(&format!("languages {}\n", pairs.join(" ")));
    s.push_str(&format!("encodings {}\n", t.encodings().join(" ")));
    if t.n_speakers() > 0 {
        s.push_str(&format!("speakers {}\n", t.speakers().join(" ")));
    }
    s
}

/// Collects taxonomy header lines until the taxonomy is complete.
#[derive(Default)]
struct HeaderParser {
    dim: Option<usize>,
    families: Option<Vec<String>>,
    languages: Option<Vec<(String, String)>>,
    encodings: Option<Vec<String>>,
    speakers: Vec<String>,
}

impl HeaderParser {
    /// Consumes one header line. Returns `Ok(false)` for a key it does not
    /// know, so callers can layer their own keys on top.
    fn line(&mut self, key: &str, rest: &[&str]) -> std::result::Result<bool, String> {
        let names = |what: &str| -> std::result::Result<Vec<String>, String> {
            if rest.is_empty() {
                return Err(format!("`{what}` needs at least one name"));
            }
            rest.iter()
                .map(|n| {
                    if check_name(n) {
                        Ok(n.to_string())
                    } else {
                        Err(format!("invalid {what} name `{n}`"))
                    }
                })
                .collect()
        };
        match key {
            "dim" => {
                let [v] = rest else {
                    return Err("`dim` takes one value".into());
                };
                let d: usize = v.parse().map_err(|_| format!("bad dim `{v}`"))?;
                if d == 0 {
                    return Err("dim must be positive".into());
                }
                self.dim = Some(d);
            }
            "families" => self.families = Some(names("family")?),
            "encodings" => self.encodings = Some(names("encoding")?),
            "speakers" => self.speakers = names("speaker")?,
            "languages" => {
                if rest.is_empty() {
                    return Err("`languages` needs at least one lang:family pair".into());
                }
                let mut pairs = Vec::new();
                for p in rest {
                    let (l, f) = p
                        .split_once(':')
                        .ok_or_else(|| format!("expected lang:family, got `{p}`"))?;
                    if !check_name(l) || !check_name(f) {
                        return Err(format!("invalid lang:family pair `{p}`"));
                    }
                    pairs.push((l.to_string(), f.to_string()));
                }
                self.languages = Some(pairs);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn taxonomy(&self) -> std::result::Result<Taxonomy, String> {
        let pairs = self.languages.as_ref().ok_or("missing `languages` line")?;
        let encodings = self.encodings.as_ref().ok_or("missing `encodings` line")?;
        let families = match &self.families {
            Some(f) => f.clone(),
            None => {
                let mut f: Vec<String> = Vec::new();
                for (_, fam) in pairs {
                    if !f.contains(fam) {
                        f.push(fam.clone());
                    }
                }
                f
            }
        };
        let mut map = Vec::with_capacity(pairs.len());
        for (l, f) in pairs {
            let idx = families
                .iter()
                .position(|x| x == f)
                .ok_or_else(|| format!("language `{l}` names undeclared family `{f}`"))?;
            map.push(idx);
        }
        Taxonomy::new(
            pairs.iter().map(|p| p.0.clone()).collect(),
            families,
            encodings.clone(),
            map,
            self.speakers.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

fn split_header(line: &str) -> (&str, Vec<&str>) {
    let mut it = line.split_whitespace();
    let key = it.next().unwrap_or("");
    (key, it.collect())
}

fn is_blank(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("dim {}\n", ds.dim()));
    out.push_str(&taxonomy_header(ds.taxonomy()));
    out.push_str("data\n");
    let t = ds.taxonomy();
    for s in ds.samples() {
        let mut first = true;
        for v in &s.features {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v}"));
        }
        out.push(',');
        out.push_str(&t.languages()[s.language]);
        out.push(',');
        out.push_str(&t.encodings()[s.encoding]);
        if let Some(spk) = s.speaker {
            out.push(',');
            out.push_str(&t.speakers()[spk]);
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(BufReader::new(file), path)
}

pub fn read_dataset(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut header = HeaderParser::default();
    let mut lines = reader.lines().enumerate();
    let mut data_line = None;
    for (i, line) in lines.by_ref() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let n = i + 1;
        if is_blank(&line) {
            continue;
        }
        let (key, rest) = split_header(&line);
        if key == "data" {
            data_line = Some(n);
            break;
        }
        if !header.line(key, &rest).map_err(|m| err(n, m))? {
            return Err(err(n, format!("unknown header key `{key}`")));
        }
    }
    let data_line = data_line.ok_or_else(|| err(0, "missing `data` line".into()))?;
    let dim = header.dim.ok_or_else(|| err(data_line, "missing `dim` line".into()))?;
    let taxonomy = header.taxonomy().map_err(|m| err(data_line, m))?;

    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let n = i + 1;
        if is_blank(&line) {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        let has_speaker = match fields.len().checked_sub(dim) {
            Some(2) => false,
            Some(3) => true,
            _ => {
                return Err(err(
                    n,
                    format!(
                        "expected {dim} features plus language, encoding and optional speaker; got {} fields",
                        fields.len()
                    ),
                ))
            }
        };
        let mut features = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            let v: f64 = f.parse().map_err(|_| err(n, format!("bad feature value `{f}`")))?;
            if !v.is_finite() {
                return Err(err(n, format!("non-finite feature value `{f}`")));
            }
            features.push(v);
        }
        let language = taxonomy
            .language_index(fields[dim])
            .ok_or_else(|| err(n, format!("unknown language `{}`", fields[dim])))?;
        let encoding = taxonomy
            .encoding_index(fields[dim + 1])
            .ok_or_else(|| err(n, format!("unknown encoding `{}`", fields[dim + 1])))?;
        let speaker = if has_speaker {
            let name = fields[dim + 2];
            Some(
                taxonomy
                    .speaker_index(name)
                    .ok_or_else(|| err(n, format!("unknown speaker `{name}`")))?,
            )
        } else {
            None
        };
        samples.push(Sample {
            features,
            language,
            encoding,
            speaker,
        });
    }
    Ok(Dataset::new(taxonomy, dim, samples)?)
}

fn coupling_name(c: Coupling) -> &'static str {
    match c {
        Coupling::Additive => "additive",
        Coupling::Independent => "independent",
    }
}

fn dims_line(key: &str, mlp: Option<&Mlp>) -> String {
    match mlp {
        None => format!("{key} -\n"),
        Some(m) => {
            let d: Vec<String> = m.dims().iter().map(usize::to_string).collect();
            format!("{key} {}\n", d.join(" "))
        }
    }
}

/// Serializes a model; the manifest is enough to rebuild it without any
/// training configuration.
pub fn checkpoint_bytes(model: &HausModel) -> Vec<u8> {
    let params = model.parameters();
    let mut head = String::new();
    head.push_str(&format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n"));
    head.push_str(&format!("eta {}\n", model.eta()));
    head.push_str(&format!("coupling {}\n", coupling_name(model.coupling())));
    head.push_str(&dims_line("trunk", Some(model.trunk())));
    head.push_str(&dims_line("family", model.family_branch()));
    head.push_str(&dims_line("language", Some(model.language_branch())));
    head.push_str(&taxonomy_header(model.taxonomy()));
    head.push_str(&format!("params {}\n", params.len()));
    let mut bytes = head.into_bytes();
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    bytes
}

pub fn write_checkpoint(model: &HausModel, path: &Path) -> Result<()> {
    write_file(path, &checkpoint_bytes(model))
}

pub fn load_checkpoint(path: &Path) -> Result<HausModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

fn shell(dims: &[usize], activate_output: bool) -> std::result::Result<Mlp, String> {
    match dims {
        [] => Err("empty layer list".into()),
        [d] => Ok(Mlp::identity(*d)),
        _ => {
            let layers = dims.windows(2).map(|w| LinearLayer::zeros(w[0], w[1])).collect();
            Mlp::from_layers(layers, activate_output).map_err(|e| e.to_string())
        }
    }
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<HausModel> {
    let err = |line: usize, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut pos = 0;
    let mut n = 0;
    let mut header = HeaderParser::default();
    let mut eta = None;
    let mut coupling = None;
    let mut trunk = None;
    let mut family: Option<Option<Vec<usize>>> = None;
    let mut language = None;
    let n_params = loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(n + 1, "manifest ends before `params`".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| err(n + 1, "manifest is not UTF-8".into()))?;
        pos += end + 1;
        n += 1;
        let (key, rest) = split_header(line);
        let dims = |rest: &[&str]| -> std::result::Result<Option<Vec<usize>>, String> {
            if rest == ["-"] {
                return Ok(None);
            }
            rest.iter()
                .map(|v| v.parse::<usize>().map_err(|_| format!("bad layer size `{v}`")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
        };
        match key {
            k if n == 1 => {
                if k != CHECKPOINT_MAGIC {
                    return Err(err(n, "not a staircase checkpoint".into()));
                }
                let version: u32 = rest.first().and_then(|v| v.parse().ok()).unwrap_or(0);
                if version != CHECKPOINT_VERSION {
                    return Err(err(n, format!("unsupported checkpoint version {version}")));
                }
            }
            "eta" => {
                let v = rest.first().and_then(|v| v.parse::<f64>().ok());
                eta = Some(v.ok_or_else(|| err(n, "bad eta".into()))?);
            }
            "coupling" => {
                coupling = Some(match rest.first().copied() {
                    Some("additive") => Coupling::Additive,
                    Some("independent") => Coupling::Independent,
                    other => return Err(err(n, format!("unknown coupling {other:?}"))),
                })
            }
            "trunk" => trunk = dims(&rest).map_err(|m| err(n, m))?,
            "family" => family = Some(dims(&rest).map_err(|m| err(n, m))?),
            "language" => language = dims(&rest).map_err(|m| err(n, m))?,
            "params" => {
                let v = rest.first().and_then(|v| v.parse::<usize>().ok());
                break v.ok_or_else(|| err(n, "bad params count".into()))?;
            }
            _ => {
                if !header.line(key, &rest).map_err(|m| err(n, m))? {
                    return Err(err(n, format!("unknown manifest key `{key}`")));
                }
            }
        }
    };
    let missing = |what: &str| err(n, format!("manifest lacks `{what}`"));
    let taxonomy = header.taxonomy().map_err(|m| err(n, m))?;
    let trunk = shell(&trunk.ok_or_else(|| missing("trunk"))?, true).map_err(|m| err(n, m))?;
    let family = match family.ok_or_else(|| missing("family"))? {
        Some(d) => Some(shell(&d, false).map_err(|m| err(n, m))?),
        None => None,
    };
    let language = shell(&language.ok_or_else(|| missing("language"))?, false).map_err(|m| err(n, m))?;
    let mut model = HausModel::from_parts(
        taxonomy,
        trunk,
        family,
        language,
        coupling.ok_or_else(|| missing("coupling"))?,
        eta.ok_or_else(|| missing("eta"))?,
    )?;
    if model.n_params() != n_params {
        return Err(err(
            n,
            format!("manifest declares {n_params} parameters, architecture has {}", model.n_params()),
        ));
    }
    let body = &bytes[pos..];
    if body.len() != n_params * 8 {
        return Err(err(
            n,
            format!("expected {} parameter bytes, found {}", n_params * 8, body.len()),
        ));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    model.set_parameters(&params)?;
    Ok(model)
}

/// Writes rows of already-formatted cells as tab-separated text.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", header.join("\t")).expect("write to Vec");
    for r in rows {
        writeln!(out, "{}", r.join("\t")).expect("write to Vec");
    }
    write_file(path, &out)
}
