//! File formats: dataset CSV, per-block chain CSVs with `run.json`,
//! `truth.json`, and content-hashed run manifests. Indices are 1-based on
//! disk.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ChainOutput, ChainState, Dataset, RunMetadata};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Regional series plus the regressor column when the file has one.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub y: DMatrix<f64>,
    pub x: Option<Vec<f64>>,
}

fn parse_f64(path: &Path, field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("row {row}: `{field}` is not a number")))
}

/// Reads `t,y1,…,yR[,x]`.
pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"t") {
        return Err(Error::format(path, "first column must be `t`"));
    }
    let has_x = names.last() == Some(&"x");
    let regions = names.len() - 1 - has_x as usize;
    for (k, name) in names[1..=regions].iter().enumerate() {
        if *name != format!("y{}", k + 1) {
            return Err(Error::format(path, format!("expected column y{}, found `{name}`", k + 1)));
        }
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); regions];
    let mut x = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        if rec.len() != names.len() {
            return Err(Error::format(path, format!("row {} has {} fields", row + 1, rec.len())));
        }
        for (i, col) in cols.iter_mut().enumerate() {
            col.push(parse_f64(path, &rec[i + 1], row + 1)?);
        }
        if has_x {
            x.push(parse_f64(path, &rec[regions + 1], row + 1)?);
        }
    }
    let n = cols.first().map_or(0, Vec::len);
    let y = DMatrix::from_fn(regions, n, |i, t| cols[i][t]);
    Ok(DatasetFile {
        y,
        x: has_x.then_some(x),
    })
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let r = data.regions();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=r).map(|i| format!("y{i}")))
        .chain(std::iter::once("x".to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for t in 0..data.len() {
        write!(w, "{}", t + 1).map_err(io)?;
        for i in 0..r {
            write!(w, ",{}", data.y[(i, t)]).map_err(io)?;
        }
        writeln!(w, ",{}", data.x[t]).map_err(io)?;
    }
    finish(path, w)
}

/// Writes a two-column `t,value` series.
pub fn write_series(path: &Path, t: &[f64], values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t,value").map_err(io)?;
    for (a, b) in t.iter().zip(values) {
        writeln!(w, "{a},{b}").map_err(io)?;
    }
    finish(path, w)
}

/// Reads the `value` column of a `t,value` file, or the `x` column of a
/// dataset file.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    if headers.len() == 2 && &headers[0] == "t" && &headers[1] == "value" {
        let mut out = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e))?;
            out.push(parse_f64(path, rec.get(1).unwrap_or(""), row + 1)?);
        }
        return Ok(out);
    }
    read_dataset(path)?
        .x
        .ok_or_else(|| Error::format(path, "expected a `t,value` series or a dataset with an `x` column"))
}

/// Per-block chain files written by [`write_chain`].
pub const CHAIN_FILES: [&str; 5] = ["alpha.csv", "beta.csv", "gamma.csv", "scalars.csv", "run.json"];

/// Writes `alpha.csv`, `beta.csv`, `gamma.csv` (unmasked pairs only),
/// `scalars.csv` and `run.json` into `dir`.
pub fn write_chain(dir: &Path, chain: &ChainOutput) -> Result<Vec<PathBuf>> {
    let (r, n) = (chain.regions(), chain.len());
    let free = chain.meta.spec.unmasked_pairs(r);
    let paths: Vec<PathBuf> = CHAIN_FILES.iter().map(|f| dir.join(f)).collect();

    let mut alpha = create(&paths[0])?;
    let mut beta = create(&paths[1])?;
    let mut gamma = create(&paths[2])?;
    let mut scalars = create(&paths[3])?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p.clone(), e)
    };
    writeln!(alpha, "iter,i,value").map_err(io(&paths[0]))?;
    writeln!(beta, "iter,i,t,value").map_err(io(&paths[1]))?;
    writeln!(gamma, "iter,i,j,t,value").map_err(io(&paths[2]))?;
    writeln!(scalars, "iter,sigma2_eps,sigma2_omega,sigma2_delta,rho,tau,eta").map_err(io(&paths[3]))?;
    for (k, s) in chain.draws.iter().enumerate() {
        let it = k + 1;
        for i in 0..r {
            writeln!(alpha, "{it},{},{}", i + 1, s.alpha[i]).map_err(io(&paths[0]))?;
            for t in 0..n {
                writeln!(beta, "{it},{},{},{}", i + 1, t + 1, s.beta[(i, t)]).map_err(io(&paths[1]))?;
            }
        }
        for &p in &free {
            for (t, v) in s.gamma[p].iter().enumerate() {
                writeln!(gamma, "{it},{},{},{},{v}", p / r + 1, p % r + 1, t + 1).map_err(io(&paths[2]))?;
            }
        }
        writeln!(
            scalars,
            "{it},{},{},{},{},{},{}",
            s.sigma2_eps, s.sigma2_omega, s.sigma2_delta, s.rho, s.tau, s.eta
        )
        .map_err(io(&paths[3]))?;
    }
    finish(&paths[0], alpha)?;
    finish(&paths[1], beta)?;
    finish(&paths[2], gamma)?;
    finish(&paths[3], scalars)?;
    write_json(&paths[4], &chain.meta)?;
    Ok(paths)
}

fn read_rows(path: &Path, width: usize, mut f: impl FnMut(&[f64]) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(file);
    let mut buf = vec![0.0; width];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        if rec.len() != width {
            return Err(Error::format(path, format!("row {} has {} fields", row + 1, rec.len())));
        }
        for (slot, field) in buf.iter_mut().zip(rec.iter()) {
            *slot = parse_f64(path, field, row + 1)?;
        }
        f(&buf)?;
    }
    Ok(())
}

fn index(path: &Path, v: f64, bound: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v as usize > bound {
        return Err(Error::format(path, format!("index {v} outside 1..={bound}")));
    }
    Ok(v as usize - 1)
}

/// Inverse of [`write_chain`]; masked trajectories are reconstructed as 0.
pub fn read_chain(dir: &Path) -> Result<ChainOutput> {
    let meta: RunMetadata = read_json(&dir.join("run.json"))?;
    let (r, n) = (meta.regions, meta.len);
    let scalars_path = dir.join("scalars.csv");
    let mut draws: Vec<ChainState> = Vec::new();
    read_rows(&scalars_path, 7, |v| {
        draws.push(ChainState {
            alpha: vec![0.0; r],
            beta: DMatrix::zeros(r, n),
            gamma: vec![vec![0.0; n]; r * r],
            sigma2_eps: v[1],
            sigma2_omega: v[2],
            sigma2_delta: v[3],
            rho: v[4],
            tau: v[5],
            eta: v[6],
        });
        Ok(())
    })?;
    let k = draws.len();
    let p = dir.join("alpha.csv");
    read_rows(&p, 3, |v| {
        let (it, i) = (index(&p, v[0], k)?, index(&p, v[1], r)?);
        draws[it].alpha[i] = v[2];
        Ok(())
    })?;
    let p = dir.join("beta.csv");
    read_rows(&p, 4, |v| {
        let (it, i, t) = (index(&p, v[0], k)?, index(&p, v[1], r)?, index(&p, v[2], n)?);
        draws[it].beta[(i, t)] = v[3];
        Ok(())
    })?;
    let p = dir.join("gamma.csv");
    read_rows(&p, 5, |v| {
        let (it, i, j, t) = (
            index(&p, v[0], k)?,
            index(&p, v[1], r)?,
            index(&p, v[2], r)?,
            index(&p, v[3], n)?,
        );
        draws[it].gamma[i * r + j][t] = v[4];
        Ok(())
    })?;
    Ok(ChainOutput { draws, meta })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let got = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if got == 0 {
            break;
        }
        hasher.update(&buf[..got]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub version: String,
    pub wall_clock_seconds: f64,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Variant};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let y = DMatrix::from_row_slice(2, 3, &[1.5, -0.25, 1e-17, 3.0, 0.1, 2.0 / 3.0]);
        let data = Dataset::new(y, vec![0.0, 0.5, -1.0]).unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.y, data.y);
        assert_eq!(back.x.unwrap(), data.x);
    }

    #[test]
    fn dataset_without_regressor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "t,y1,y2\n1,0.5,1\n2,0.25,2\n").unwrap();
        let back = read_dataset(&path).unwrap();
        assert!(back.x.is_none());
        assert_eq!(back.y[(1, 1)], 2.0);
    }

    #[test]
    fn bad_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "time,y1\n1,0.5\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_series(&path, &[1.0, 2.0], &[0.1, -1e-300]).unwrap();
        assert_eq!(read_series(&path).unwrap(), vec![0.1, -1e-300]);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_dataset(Path::new("/nonexistent/d.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/d.csv"));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn chain_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::with_mask(Variant::Dp, [(1, 1)]);
        let state = ChainState {
            alpha: vec![0.1, 0.2],
            beta: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            gamma: vec![vec![0.1, 0.2, 0.3], vec![-0.1, 0.0, 1.0 / 3.0], vec![7.0, 8.0, 9.0], vec![0.0; 3]],
            sigma2_eps: 0.5,
            sigma2_omega: 0.25,
            sigma2_delta: 0.125,
            rho: 0.9,
            tau: 1.5,
            eta: 0.3,
        };
        let meta = RunMetadata {
            seed: 1,
            burn: 0,
            keep: 2,
            thin: 1,
            regions: 2,
            len: 3,
            spec,
            hyper: crate::model::Hyperparameters {
                mu: vec![0.0, 0.0],
                sigma2_alpha: 1.0,
                beta_bar: 0.0,
                sigma2_beta: 1.0,
                gamma_bar: 0.0,
                sigma2_gamma: 1.0,
                a: 0.0,
                b: 0.0,
                c: 0.1,
                a_tau: 0.2,
                b_tau: 0.1,
            },
            initial_sigma2_delta: 0.1,
            initial_rho: 0.5,
            mh_acceptance_rate: 0.3,
            mh_acceptance_rate_burn: 0.3,
            proposal_scales: [0.1, 0.1],
            version: "test".into(),
        };
        let chain = ChainOutput {
            draws: vec![state.clone(), state],
            meta,
        };
        write_chain(dir.path(), &chain).unwrap();
        let back = read_chain(dir.path()).unwrap();
        assert_eq!(back, chain);
        let gamma = fs::read_to_string(dir.path().join("gamma.csv")).unwrap();
        assert!(!gamma.contains("\n1,2,2,"));
    }
}
