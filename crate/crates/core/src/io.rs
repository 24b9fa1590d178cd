//! File formats: shot-chart CSV, point CSV, grid CSV, draws CSV and JSON.
//!
//! Every writer goes through [`write_atomic`], so a crashed run never leaves
//! a half-written artifact behind.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::court::{court_domain, CourtGeometry};
use crate::error::{Error, Result};
use crate::grid::{DomainGrid, Field, Point};
use crate::mark::{MarkCovariates, MarkedPattern, ShotMeta};
use crate::mcmc::PosteriorDraws;

/// Six significant digits, switching to exponent form for very large or
/// small magnitudes.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{v:.5e}");
    }
    format!("{:.*}", (5 - mag).max(0) as usize, v)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// SHA-256 of the canonical JSON encoding, hex encoded.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Reproducibility stamp carried by every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Result<Self> {
        Ok(Provenance {
            config_hash: config_hash(config)?,
            seed,
        })
    }

    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Wrap a serializable value together with its provenance.
pub fn stamped<T: Serialize>(value: &T, provenance: &Provenance) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    let p = serde_json::to_value(provenance)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("provenance".into(), p);
            Ok(v)
        }
        None => Ok(serde_json::json!({ "value": v, "provenance": p })),
    }
}

/// Shots loaded from a CSV, plus the number of rows outside the court window.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotData {
    pub pattern: MarkedPattern,
    pub dropped: usize,
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Load a shot chart with columns
/// `x,y,made,shot_type,distance,period,seconds_left,opp_playoff`.
///
/// Only `x`, `y` and `made` are required. A missing or empty `shot_type` is
/// derived from court geometry and a missing `distance` is the distance to
/// the basket rounded to whole feet. Rows outside the 50×35 window are
/// dropped and counted.
pub fn load_shot_csv(path: &Path) -> Result<ShotData> {
    let text = std::fs::read_to_string(path)?;
    parse_shot_csv(&text)
}

pub fn parse_shot_csv(text: &str) -> Result<ShotData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (cx, cy, cm) = match (col("x"), col("y"), col("made")) {
        (Some(x), Some(y), Some(m)) => (x, y, m),
        _ => return Err(parse_err(1, "header must contain x, y and made")),
    };
    let c_type = col("shot_type");
    let c_dist = col("distance");
    let c_period = col("period");
    let c_secs = col("seconds_left");
    let c_opp = col("opp_playoff");

    let court = CourtGeometry::default();
    let window = court_domain();
    let mut locations = Vec::new();
    let mut marks = Vec::new();
    let mut meta = Vec::new();
    let mut dropped = 0usize;
    let mut rows = 0usize;

    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        rows += 1;
        let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
        let num = |c: usize, name: &str| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(line, format!("{name}: cannot parse {s:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{name}: non-finite value")));
            }
            Ok(v)
        };
        let x = num(cx, "x")?;
        let y = num(cy, "y")?;
        let made = match rec.get(cm).unwrap_or("") {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(parse_err(line, format!("made must be 0 or 1, got {other:?}"))),
        };
        let s = Point::new(x, y);
        if !window.contains(s) {
            dropped += 1;
            continue;
        }
        let shot_type = match field(c_type) {
            Some("2") => 2,
            Some("3") => 3,
            Some(other) => return Err(parse_err(line, format!("shot_type must be 2 or 3, got {other:?}"))),
            None => court.points(s) as u8,
        };
        let distance = match field(c_dist) {
            Some(_) => num(c_dist.unwrap(), "distance")?,
            None => court.distance_to_basket(s).round(),
        };
        let period = match field(c_period) {
            Some(p) => p
                .parse::<u8>()
                .ok()
                .filter(|p| (1..=9).contains(p))
                .ok_or_else(|| parse_err(line, format!("period: invalid {p:?}")))?,
            None => 1,
        };
        let seconds_left = match field(c_secs) {
            Some(_) => num(c_secs.unwrap(), "seconds_left")?,
            None => 0.0,
        };
        let opp_playoff = match field(c_opp) {
            Some("0") | Some("false") | None => false,
            Some("1") | Some("true") => true,
            Some(other) => return Err(parse_err(line, format!("opp_playoff: invalid {other:?}"))),
        };
        locations.push(s);
        marks.push(made);
        meta.push(ShotMeta {
            shot_type,
            distance: Some(distance),
            period,
            seconds_left,
            opp_playoff,
        });
    }
    if rows == 0 {
        return Err(Error::invalid("shot file has no data rows"));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} shots outside the half-court window");
    }
    let n = locations.len();
    let pattern = MarkedPattern::new(locations, marks, MarkCovariates::empty(n))?.with_meta(meta)?;
    Ok(ShotData { pattern, dropped })
}

pub fn shot_csv_string(pattern: &MarkedPattern) -> Result<String> {
    let meta = pattern
        .meta
        .as_ref()
        .ok_or_else(|| Error::invalid("pattern carries no shot metadata"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "made", "shot_type", "distance", "period", "seconds_left", "opp_playoff"])?;
    for ((s, m), meta) in pattern.locations.iter().zip(&pattern.marks).zip(meta) {
        w.write_record([
            s.x.to_string(),
            s.y.to_string(),
            m.to_string(),
            meta.shot_type.to_string(),
            meta.distance.map(|d| d.to_string()).unwrap_or_default(),
            meta.period.to_string(),
            meta.seconds_left.to_string(),
            (meta.opp_playoff as u8).to_string(),
        ])?;
    }
    into_string(w)
}

pub fn write_shot_csv(path: &Path, pattern: &MarkedPattern) -> Result<()> {
    write_atomic(path, shot_csv_string(pattern)?.as_bytes())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Generic marked CSV: `x,y,made` followed by mark covariate columns. The
/// covariate columns are written as stored; `intercept` columns are skipped
/// and restored on reading.
pub fn marked_csv_string(pattern: &MarkedPattern) -> Result<String> {
    let z = &pattern.covariates;
    let keep: Vec<usize> = (0..z.q()).filter(|&j| z.labels()[j] != "intercept").collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string(), "y".to_string(), "made".to_string()];
    header.extend(keep.iter().map(|&j| z.labels()[j].clone()));
    w.write_record(&header)?;
    for i in 0..pattern.len() {
        let s = pattern.locations[i];
        let row = z.base_row(i);
        let mut rec = vec![s.x.to_string(), s.y.to_string(), pattern.marks[i].to_string()];
        rec.extend(keep.iter().map(|&j| row[j].to_string()));
        w.write_record(&rec)?;
    }
    into_string(w)
}

pub fn write_marked_csv(path: &Path, pattern: &MarkedPattern) -> Result<()> {
    write_atomic(path, marked_csv_string(pattern)?.as_bytes())
}

/// Parse a generic marked CSV; an intercept column is prepended to the
/// covariates.
pub fn parse_marked_csv(text: &str) -> Result<MarkedPattern> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "x" || &headers[1] != "y" || &headers[2] != "made" {
        return Err(parse_err(1, "header must start with x,y,made"));
    }
    let mut labels = vec!["intercept".to_string()];
    labels.extend(headers.iter().skip(3).map(str::to_string));
    let mut locations = Vec::new();
    let mut marks = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(line, format!("cannot parse {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let made = match vals[2] {
            m if m == 0.0 => 0,
            m if m == 1.0 => 1,
            m => return Err(parse_err(line, format!("made must be 0 or 1, got {m}"))),
        };
        locations.push(Point::new(vals[0], vals[1]));
        marks.push(made);
        let mut row = vec![1.0];
        row.extend_from_slice(&vals[3..]);
        rows.push(row);
    }
    let z = if rows.is_empty() {
        MarkCovariates::new(0, vec![], labels.clone(), vec![false; labels.len()])?
    } else {
        MarkCovariates::from_rows(&rows, labels)?
    };
    MarkedPattern::new(locations, marks, z)
}

pub fn write_points_csv(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.y.to_string()])?;
    }
    write_atomic(path, into_string(w)?.as_bytes())
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line, "expected numeric x,y"))
        };
        out.push(Point::new(get(0)?, get(1)?));
    }
    Ok(out)
}

/// Grid CSV: one `x,y,value` row per cell center, in flat cell order.
pub fn grid_csv_string(field: &Field, provenance: Option<&Provenance>) -> Result<String> {
    let mut out = provenance.map(Provenance::comment).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "value"])?;
    for (c, v) in field.grid().centers().zip(field.values()) {
        w.write_record([c.x.to_string(), c.y.to_string(), v.to_string()])?;
    }
    out.push_str(&into_string(w)?);
    Ok(out)
}

pub fn write_grid_csv(path: &Path, field: &Field, provenance: Option<&Provenance>) -> Result<()> {
    write_atomic(path, grid_csv_string(field, provenance)?.as_bytes())
}

/// Read a grid CSV onto `grid`; every cell must appear exactly once.
pub fn read_grid_csv(path: &Path, grid: DomainGrid) -> Result<Field> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
    let mut values = vec![f64::NAN; grid.n_cells()];
    let mut seen = vec![false; grid.n_cells()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line, "expected numeric x,y,value"))
        };
        let k = grid
            .flat_cell_of(Point::new(get(0)?, get(1)?))
            .map_err(|e| parse_err(line, e.to_string()))?;
        if seen[k] {
            return Err(parse_err(line, "cell listed twice"));
        }
        seen[k] = true;
        values[k] = get(2)?;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("grid CSV is missing cell {k}")));
    }
    Field::from_values(grid, values)
}

/// Retained draws with one column per parameter label.
pub fn draws_csv_string(draws: &PosteriorDraws, provenance: Option<&Provenance>) -> Result<String> {
    let mut out = provenance.map(Provenance::comment).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&draws.labels)?;
    for row in &draws.draws {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.push_str(&into_string(w)?);
    Ok(out)
}

pub fn write_draws_csv(path: &Path, draws: &PosteriorDraws, provenance: Option<&Provenance>) -> Result<()> {
    write_atomic(path, draws_csv_string(draws, provenance)?.as_bytes())
}

/// Read draws written by [`write_draws_csv`]; the header must match the
/// layout's labels.
pub fn read_draws_csv(
    path: &Path,
    layout: crate::joint::ParamLayout,
    scale: f64,
    config: crate::mcmc::ChainConfig,
) -> Result<PosteriorDraws> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != layout.labels() {
        return Err(Error::invalid(format!(
            "draws header {header:?} does not match model parameters {:?}",
            layout.labels()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        rows.push(
            rec.iter()
                .map(|s| s.parse::<f64>().map_err(|_| parse_err(line, format!("cannot parse {s:?}"))))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    PosteriorDraws::from_rows(layout, scale, rows, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_ROWS: &str = "x,y,made,shot_type,distance,period,seconds_left,opp_playoff\n\
        25,10,1,2,5,1,300,0\n\
        3,2,0,3,22,2,12.5,1\n\
        25,30,1,,,4,40,0\n";

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1234.56789), "1234.57");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(8.524746), "8.52475");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.5e20), "1.50000e20");
    }

    #[test]
    fn loads_well_formed_rows() {
        let d = parse_shot_csv(THREE_ROWS).unwrap();
        assert_eq!(d.pattern.len(), 3);
        assert_eq!(d.dropped, 0);
        let meta = d.pattern.meta.as_ref().unwrap();
        assert_eq!(meta[2].shot_type, 3);
        assert_eq!(meta[2].distance, Some(25.0));
        assert!(meta[1].opp_playoff);
    }

    #[test]
    fn bad_mark_names_line() {
        let text = "x,y,made\n25,10,1\n25,11,2\n";
        match parse_shot_csv(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("made"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_window_rows_dropped() {
        let d = parse_shot_csv("x,y,made\n25,10,1\n25,40,0\n").unwrap();
        assert_eq!(d.pattern.len(), 1);
        assert_eq!(d.dropped, 1);
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_shot_csv("x,y,made\n").is_err());
        assert!(parse_shot_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn shot_csv_round_trip() {
        let d = parse_shot_csv(THREE_ROWS).unwrap();
        let again = parse_shot_csv(&shot_csv_string(&d.pattern).unwrap()).unwrap();
        assert_eq!(d.pattern, again.pattern);
    }

    #[test]
    fn marked_csv_round_trip() {
        let rows = vec![vec![1.0, 0.25, -1.5], vec![1.0, 1.0 / 3.0, 2.0]];
        let z = MarkCovariates::from_rows(&rows, vec!["intercept".into(), "z1".into(), "z2".into()]).unwrap();
        let p = MarkedPattern::new(vec![Point::new(0.1, 0.2), Point::new(-0.5, 0.9)], vec![1, 0], z).unwrap();
        assert_eq!(parse_marked_csv(&marked_csv_string(&p).unwrap()).unwrap(), p);
        assert!(parse_marked_csv("x,y,made\n0,0,3\n").is_err());
    }

    #[test]
    fn grid_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = crate::court::court_grid().unwrap();
        let f = Field::from_fn(grid, |p| p.x * 0.1 + p.y.sin()).unwrap();
        let path = dir.path().join("f.csv");
        let prov = Provenance::new(&"cfg", 7).unwrap();
        write_grid_csv(&path, &f, Some(&prov)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash="));
        assert_eq!(read_grid_csv(&path, grid).unwrap(), f);
    }

    #[test]
    fn points_round_trip_and_hash_stable() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![Point::new(0.1, -0.3), Point::new(1.0 / 3.0, 0.7)];
        let path = dir.path().join("p.csv");
        write_points_csv(&path, &pts).unwrap();
        assert_eq!(read_points_csv(&path).unwrap(), pts);
        assert_eq!(config_hash(&[1, 2]).unwrap(), config_hash(&[1, 2]).unwrap());
        assert_ne!(config_hash(&[1, 2]).unwrap(), config_hash(&[2, 1]).unwrap());
    }
}
