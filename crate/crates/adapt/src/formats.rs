//! Structure files: extended XYZ (single or multi-frame), JSON, and
//! dataset manifests.
//!
//! XYZ comment lines carry `key=value` pairs; values may be double-quoted.
//! Recognized keys are `id`, `energy` (eV) and `defects`, a
//! semicolon-separated list of `x,y,z` sites. Atom lines are
//! `symbol x y z` or `symbol x y z fx fy fz`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adapt_core::{Atom, Structure, Vec3};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Xyz,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "xyz" | "extxyz" => Some(Format::Xyz),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Xyz => "xyz",
            Format::Json => "json",
        }
    }
}

fn parse_err(source: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        reason: reason.into(),
    }
}

fn number(token: &str, source: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(source, line, format!("{what} `{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(source, line, format!("{what} `{token}` is not finite")));
    }
    Ok(v)
}

/// `key=value` pairs of a comment line, honoring double quotes.
fn comment_pairs(comment: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut chars = comment.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|&c| c != '=' && !c.is_whitespace()) {
            key.push(c);
        }
        if chars.next_if_eq(&'=').is_none() {
            pairs.push((key, String::new()));
            continue;
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            for c in chars.by_ref() {
                if c == '"' {
                    break;
                }
                value.push(c);
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                value.push(c);
            }
        }
        pairs.push((key, value));
    }
    pairs
}

fn parse_defects(text: &str, source: &str, line: usize) -> Result<Vec<Vec3>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|site| {
            let parts: Vec<&str> = site.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(parse_err(source, line, format!("defect site `{site}` needs three coordinates")));
            }
            let mut p = [0.0; 3];
            for (c, t) in p.iter_mut().zip(parts) {
                *c = number(t, source, line, "defect coordinate")?;
            }
            Ok(p)
        })
        .collect()
}

/// Every frame of an extended XYZ file. `source` names the input in error
/// messages; line numbers are 1-based.
pub fn parse_xyz(text: &str, source: &str) -> Result<Vec<Structure>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let count_line = i + 1;
        let n: usize = lines[i]
            .trim()
            .parse()
            .map_err(|_| parse_err(source, count_line, format!("expected an atom count, found `{}`", lines[i].trim())))?;
        let comment = lines
            .get(i + 1)
            .ok_or_else(|| parse_err(source, count_line, "missing comment line"))?;
        let mut s = Structure::new(String::new(), Vec::with_capacity(n));
        for (key, value) in comment_pairs(comment) {
            match key.as_str() {
                "id" => s.id = value,
                "energy" => s.energy = Some(number(&value, source, i + 2, "energy")?),
                "defects" => s.defect_sites = parse_defects(&value, source, i + 2)?,
                _ => {}
            }
        }
        let mut forces = Vec::with_capacity(n);
        let mut with_forces = None;
        for k in 0..n {
            let ln = i + 3 + k;
            let line = lines
                .get(i + 2 + k)
                .ok_or_else(|| parse_err(source, ln, format!("expected {n} atom lines, file ends after {k}")))?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            let has_forces = match cols.len() {
                4 => false,
                7 => true,
                c => return Err(parse_err(source, ln, format!("expected 4 or 7 columns, found {c}"))),
            };
            if *with_forces.get_or_insert(has_forces) != has_forces {
                return Err(parse_err(source, ln, "force columns present on some atoms only"));
            }
            let mut p = [0.0; 3];
            for c in 0..3 {
                p[c] = number(cols[1 + c], source, ln, "coordinate")?;
            }
            s.atoms.push(Atom::new(cols[0], p));
            if has_forces {
                let mut f = [0.0; 3];
                for c in 0..3 {
                    f[c] = number(cols[4 + c], source, ln, "force")?;
                }
                forces.push(f);
            }
        }
        if with_forces == Some(true) {
            s.forces = Some(forces);
        }
        frames.push(s);
        i += 2 + n;
    }
    Ok(frames)
}

fn fmt_num(v: f64) -> String {
    // 17 significant digits round-trip every f64 exactly.
    format!("{v:.16e}")
}

/// One extended XYZ frame.
pub fn write_xyz(s: &Structure) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", s.len());
    let props = if s.forces.is_some() {
        "species:S:1:pos:R:3:forces:R:3"
    } else {
        "species:S:1:pos:R:3"
    };
    let _ = write!(out, "Properties={props} id=\"{}\"", s.id.replace('"', "'"));
    if let Some(e) = s.energy {
        let _ = write!(out, " energy={}", fmt_num(e));
    }
    if !s.defect_sites.is_empty() {
        let sites: Vec<String> = s
            .defect_sites
            .iter()
            .map(|d| d.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(","))
            .collect();
        let _ = write!(out, " defects=\"{}\"", sites.join(";"));
    }
    out.push('\n');
    for (i, a) in s.atoms.iter().enumerate() {
        let _ = write!(out, "{:<3}", a.symbol);
        for v in a.position {
            let _ = write!(out, " {}", fmt_num(v));
        }
        if let Some(f) = &s.forces {
            for v in f[i] {
                let _ = write!(out, " {}", fmt_num(v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_xyz_frames<'a>(frames: impl IntoIterator<Item = &'a Structure>) -> String {
    frames.into_iter().map(write_xyz).collect()
}

pub fn parse_json_structure(text: &str, source: &str) -> Result<Structure> {
    let s: Structure = serde_json::from_str(text).map_err(|e| parse_err(source, e.line(), e.to_string()))?;
    s.validate().map_err(|reason| parse_err(source, 0, reason))?;
    Ok(s)
}

pub fn write_json_structure(s: &Structure) -> String {
    serde_json::to_string_pretty(s).expect("structures always serialize")
}

/// A single structure in the given format. A multi-frame XYZ input is an
/// error here; use [`parse_xyz`] for trajectories.
pub fn parse_structure(text: &str, format: Format, source: &str) -> Result<Structure> {
    match format {
        Format::Json => parse_json_structure(text, source),
        Format::Xyz => {
            let mut frames = parse_xyz(text, source)?;
            match frames.len() {
                1 => Ok(frames.pop().unwrap()),
                n => Err(parse_err(source, 1, format!("expected one frame, found {n}"))),
            }
        }
    }
}

pub fn serialize_structure(s: &Structure, format: Format) -> String {
    match format {
        Format::Xyz => write_xyz(s),
        Format::Json => write_json_structure(s),
    }
}

fn format_of(path: &Path) -> Result<Format> {
    Format::from_path(path).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        reason: "unknown structure file extension (expected .xyz or .json)".into(),
    })
}

/// Reads one structure; a missing id defaults to the file stem.
pub fn read_structure(path: &Path) -> Result<Structure> {
    let text = fs::read_to_string(path).at(path)?;
    let mut s = parse_structure(&text, format_of(path)?, &path.display().to_string())?;
    if s.id.is_empty() {
        s.id = path.file_stem().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(s)
}

pub fn write_structure(path: &Path, s: &Structure) -> Result<()> {
    let format = format_of(path)?;
    fs::write(path, serialize_structure(s, format)).at(path)
}

/// Structures listed in a manifest: one path per line, relative to the
/// manifest's directory. Blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<Structure>> {
    let text = fs::read_to_string(path).at(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| read_structure(&base.join(l)))
        .collect()
}

/// Writes each structure to `dir/structures/<id>.<ext>` and lists them in
/// `dir/manifest.txt`, which is returned.
pub fn write_dataset(dir: &Path, structures: &[Structure], format: Format) -> Result<PathBuf> {
    let sub = dir.join("structures");
    fs::create_dir_all(&sub).at(&sub)?;
    let mut manifest = String::new();
    for s in structures {
        let rel = format!("structures/{}.{}", s.id, format.extension());
        write_structure(&dir.join(&rel), s)?;
        manifest.push_str(&rel);
        manifest.push('\n');
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).at(&path)?;
    Ok(path)
}
