//! Posterior archives as long-format tables.
//!
//! | file         | columns                                        |
//! |--------------|------------------------------------------------|
//! | `alpha.csv`  | `sample,iteration,attribute,class,value`       |
//! | `beta.csv`   | `sample,iteration,entry,level,coef,value`      |
//! | `gamma.csv`  | `sample,iteration,class,coef,value`            |
//! | `g.csv`      | `sample,iteration,entry,attribute,value`       |
//! | `theta.csv`  | `sample,iteration,attribute,coef,value`        |
//! | `z.csv`      | `sample,iteration,obs,class`                   |
//! | `w.csv`      | `sample,iteration,obs,attribute,value`         |
//! | `loglik.csv` | `sample,iteration,obs_0,…,obs_{N-1}`           |
//!
//! `archive.json` holds the model configuration, the schedule, the relabel
//! flag and Metropolis acceptance rates.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tables::{read_table, write_rows, Table};
use crate::error::{Error, Result};
use crate::gibbs::{PosteriorSamples, SamplerSchedule};
use crate::model::{ModelConfig, Params};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveMeta {
    config: ModelConfig,
    schedule: SamplerSchedule,
    relabeled: bool,
    mh_acceptance: Vec<Option<f64>>,
    n_samples: usize,
    n_obs: usize,
}

/// Writes the parameter tables of `draws`, each tagged `(sample, iteration)`.
pub fn write_params(dir: &Path, draws: &[(usize, usize, &Params)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tag = |s: usize, it: usize| vec![s.to_string(), it.to_string()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut gamma = Vec::new();
    let mut g = Vec::new();
    let mut theta = Vec::new();
    for &(s, it, p) in draws {
        for ((j, h), v) in indexed(&p.alpha) {
            alpha.push([tag(s, it), vec![j.to_string(), h.to_string(), v.to_string()]].concat());
        }
        for (i, levels) in p.beta.iter().enumerate() {
            for (l, row) in levels.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    beta.push([tag(s, it), vec![i.to_string(), l.to_string(), k.to_string(), v.to_string()]].concat());
                }
            }
        }
        for ((h, k), v) in indexed(&p.gamma) {
            gamma.push([tag(s, it), vec![h.to_string(), k.to_string(), v.to_string()]].concat());
        }
        for ((i, j), v) in indexed(&p.g) {
            g.push([tag(s, it), vec![i.to_string(), j.to_string(), v.to_string()]].concat());
        }
        for ((j, k), v) in indexed(&p.theta) {
            theta.push([tag(s, it), vec![j.to_string(), k.to_string(), v.to_string()]].concat());
        }
    }
    write_rows(&dir.join("alpha.csv"), &["sample", "iteration", "attribute", "class", "value"], alpha)?;
    write_rows(&dir.join("beta.csv"), &["sample", "iteration", "entry", "level", "coef", "value"], beta)?;
    write_rows(&dir.join("gamma.csv"), &["sample", "iteration", "class", "coef", "value"], gamma)?;
    write_rows(&dir.join("g.csv"), &["sample", "iteration", "entry", "attribute", "value"], g)?;
    write_rows(&dir.join("theta.csv"), &["sample", "iteration", "attribute", "coef", "value"], theta)?;
    Ok(())
}

/// Writes `z.csv` and `w.csv` for draws tagged `(sample, iteration)`.
pub fn write_latents(dir: &Path, draws: &[(usize, usize, &[usize], &DMatrix<u8>)]) -> Result<()> {
    let mut z_rows = Vec::new();
    let mut w_rows = Vec::new();
    for &(s, it, z, w) in draws {
        for (n, h) in z.iter().enumerate() {
            z_rows.push(vec![s.to_string(), it.to_string(), n.to_string(), h.to_string()]);
        }
        for n in 0..w.nrows() {
            for j in 0..w.ncols() {
                w_rows.push(vec![s.to_string(), it.to_string(), n.to_string(), j.to_string(), w[(n, j)].to_string()]);
            }
        }
    }
    write_rows(&dir.join("z.csv"), &["sample", "iteration", "obs", "class"], z_rows)?;
    write_rows(&dir.join("w.csv"), &["sample", "iteration", "obs", "attribute", "value"], w_rows)?;
    Ok(())
}

/// Row-major `((row, col), value)` pairs.
fn indexed<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| ((r, c), m[(r, c)])))
}

pub fn write_archive(dir: &Path, samples: &PosteriorSamples) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let draws: Vec<(usize, usize, &Params)> =
        samples.params.iter().enumerate().map(|(s, p)| (s, samples.iterations[s], p)).collect();
    write_params(dir, &draws)?;
    let latents: Vec<(usize, usize, &[usize], &DMatrix<u8>)> =
        (0..samples.len()).map(|s| (s, samples.iterations[s], samples.z[s].as_slice(), &samples.w[s])).collect();
    write_latents(dir, &latents)?;

    let n = samples.loglik.ncols();
    let mut header = vec!["sample".to_string(), "iteration".to_string()];
    header.extend((0..n).map(|k| format!("obs_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        &dir.join("loglik.csv"),
        &header_refs,
        (0..samples.len()).map(|s| {
            let mut row = vec![s.to_string(), samples.iterations[s].to_string()];
            row.extend(samples.loglik.row(s).iter().map(|v| v.to_string()));
            row
        }),
    )?;

    let meta = ArchiveMeta {
        config: samples.config.clone(),
        schedule: samples.schedule.clone(),
        relabeled: samples.relabeled,
        mh_acceptance: samples.mh_acceptance.clone(),
        n_samples: samples.len(),
        n_obs: n,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(dir.join("archive.json"), json)?;
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(table: &Table, r: usize, c: usize, what: &str) -> Result<T> {
    table.rows[r][c]
        .parse()
        .map_err(|_| Error::Data(format!("{what}: cannot parse `{}` at row {r}, column {c}", table.rows[r][c])))
}

/// Reads a long table into `(sample, indices, value)` tuples, checking the header.
fn read_long<T: std::str::FromStr>(path: &Path, expect: &[&str]) -> Result<Vec<(usize, Vec<usize>, T)>> {
    let table = read_table(path)?;
    if table.header != expect {
        return Err(Error::Data(format!("{}: header {:?}, expected {:?}", path.display(), table.header, expect)));
    }
    let what = path.display().to_string();
    let last = expect.len() - 1;
    (0..table.rows.len())
        .map(|r| {
            let s = parse_cell(&table, r, 0, &what)?;
            let idx = (2..last).map(|c| parse_cell(&table, r, c, &what)).collect::<Result<Vec<usize>>>()?;
            Ok((s, idx, parse_cell(&table, r, last, &what)?))
        })
        .collect()
}

fn check_index(ok: bool, path: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Data(format!("{path}: index out of range for the archived configuration")))
    }
}

fn read_param_tables(dir: &Path, config: &ModelConfig, s_total: usize) -> Result<Vec<Params>> {
    let mut params = vec![Params::zeros(config); s_total];
    let in_s = |s: usize| s < s_total;

    for (s, idx, v) in
        read_long::<f64>(&dir.join("alpha.csv"), &["sample", "iteration", "attribute", "class", "value"])?
    {
        check_index(in_s(s) && idx[0] < config.q && idx[1] < config.d, "alpha.csv")?;
        params[s].alpha[(idx[0], idx[1])] = v;
    }
    for (s, idx, v) in
        read_long::<f64>(&dir.join("beta.csv"), &["sample", "iteration", "entry", "level", "coef", "value"])?
    {
        check_index(
            in_s(s) && idx[0] < config.p && idx[1] < config.entries[idx[0]].n_levels() && idx[2] <= config.q,
            "beta.csv",
        )?;
        params[s].beta[idx[0]][idx[1]][idx[2]] = v;
    }
    for (s, idx, v) in read_long::<f64>(&dir.join("gamma.csv"), &["sample", "iteration", "class", "coef", "value"])? {
        check_index(in_s(s) && idx[0] < config.d && idx[1] <= config.px, "gamma.csv")?;
        params[s].gamma[(idx[0], idx[1])] = v;
    }
    for (s, idx, v) in read_long::<u8>(&dir.join("g.csv"), &["sample", "iteration", "entry", "attribute", "value"])? {
        check_index(in_s(s) && idx[0] < config.p && idx[1] < config.q && v <= 1, "g.csv")?;
        params[s].g[(idx[0], idx[1])] = v;
    }
    for (s, idx, v) in read_long::<f64>(&dir.join("theta.csv"), &["sample", "iteration", "attribute", "coef", "value"])?
    {
        check_index(in_s(s) && idx[0] < config.q && idx[1] <= config.pt, "theta.csv")?;
        params[s].theta[(idx[0], idx[1])] = v;
    }
    for p in &params {
        p.validate(config)?;
    }
    Ok(params)
}

pub fn read_archive(dir: &Path) -> Result<PosteriorSamples> {
    let text = std::fs::read_to_string(dir.join("archive.json"))?;
    let meta: ArchiveMeta = serde_json::from_str(&text).map_err(|e| Error::Data(format!("archive.json: {e}")))?;
    let config = meta.config;
    config.validate()?;
    let (s_total, n) = (meta.n_samples, meta.n_obs);
    let params = read_param_tables(dir, &config, s_total)?;
    let in_s = |s: usize| s < s_total;

    let mut z = vec![vec![0usize; n]; s_total];
    for (s, idx, h) in read_long::<usize>(&dir.join("z.csv"), &["sample", "iteration", "obs", "class"])? {
        check_index(in_s(s) && idx[0] < n && h < config.d, "z.csv")?;
        z[s][idx[0]] = h;
    }
    let mut w = vec![DMatrix::zeros(n, config.q); s_total];
    for (s, idx, v) in read_long::<u8>(&dir.join("w.csv"), &["sample", "iteration", "obs", "attribute", "value"])? {
        check_index(in_s(s) && idx[0] < n && idx[1] < config.q && v <= 1, "w.csv")?;
        w[s][(idx[0], idx[1])] = v;
    }

    let table = read_table(&dir.join("loglik.csv"))?;
    if table.rows.len() != s_total || table.header.len() != n + 2 {
        return Err(Error::Data("loglik.csv does not match archive.json".into()));
    }
    let mut loglik = DMatrix::zeros(s_total, n);
    let mut iterations = vec![0; s_total];
    for r in 0..s_total {
        let s: usize = parse_cell(&table, r, 0, "loglik.csv")?;
        check_index(in_s(s), "loglik.csv")?;
        iterations[s] = parse_cell(&table, r, 1, "loglik.csv")?;
        for k in 0..n {
            loglik[(s, k)] = parse_cell(&table, r, k + 2, "loglik.csv")?;
        }
    }
    Ok(PosteriorSamples {
        params,
        z,
        w,
        loglik,
        iterations,
        mh_acceptance: meta.mh_acceptance,
        config,
        schedule: meta.schedule,
        relabeled: meta.relabeled,
    })
}

/// Reads a single parameter set written by [`write_params`] with one sample.
pub fn read_params(dir: &Path, config: &ModelConfig) -> Result<Params> {
    Ok(read_param_tables(dir, config, 1)?.remove(0))
}
