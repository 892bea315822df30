//! User and item embedding tables.
//!
//! One [`EmbeddingStore`] serves every model variant; the [`Variant`] only
//! selects which geometry the objective, optimizer and evaluator apply to the
//! stored coordinates. Rows are stored contiguously (row-major).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Triplet};
use crate::error::{Error, Result};
use crate::gyrovector::{self, Curvature};

/// Model family sharing the same storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Poincaré ball metric learning with distortion and RSGD.
    Hyper,
    /// Optimization in the tangent space at the origin.
    HyperTs,
    /// Euclidean collaborative metric learning with clipped norms.
    Cml,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Hyper, Variant::HyperTs, Variant::Cml];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hyper => "hyper",
            Variant::HyperTs => "hyperts",
            Variant::Cml => "cml",
        }
    }

    pub fn is_hyperbolic(self) -> bool {
        !matches!(self, Variant::Cml)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hyper" | "hyperml" => Ok(Variant::Hyper),
            "hyperts" | "hyper-ts" => Ok(Variant::HyperTs),
            "cml" | "euclidean" | "euclideancml" | "euclidean-cml" => Ok(Variant::Cml),
            _ => Err(Error::config(
                "variant",
                format!("unknown variant `{s}` (expected hyper, hyperts or cml)"),
            )),
        }
    }
}

/// Initialization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub beta: f64,
    pub dim: usize,
    pub seed: u64,
}

impl InitConfig {
    /// Half-width of the uniform initializer, `(3β²/(2d))^(1/3)`.
    pub fn alpha(&self) -> f64 {
        (3.0 * self.beta * self.beta / (2.0 * self.dim as f64)).cbrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    users: Vec<f64>,
    items: Vec<f64>,
    n_users: usize,
    n_items: usize,
    dim: usize,
    curvature: Curvature,
    variant: Variant,
}

/// Draws every coordinate i.i.d. from `U(-α, α)`; users first, then items.
pub fn init_embeddings(
    n_users: usize,
    n_items: usize,
    cfg: InitConfig,
    curvature: Curvature,
    variant: Variant,
) -> Result<EmbeddingStore> {
    if n_users == 0 || n_items == 0 {
        return Err(Error::InvalidInput(format!(
            "embedding tables need at least one user and one item (got {n_users} users, {n_items} items)"
        )));
    }
    if cfg.dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let alpha = cfg.alpha();
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "initializer half-width must be finite and positive (beta = {})",
            cfg.beta
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = Uniform::new(-alpha, alpha);
    let users: Vec<f64> = (0..n_users * cfg.dim).map(|_| dist.sample(&mut rng)).collect();
    let items: Vec<f64> = (0..n_items * cfg.dim).map(|_| dist.sample(&mut rng)).collect();
    let store = EmbeddingStore {
        users,
        items,
        n_users,
        n_items,
        dim: cfg.dim,
        curvature,
        variant,
    };
    store.check_invariants()?;
    Ok(store)
}

impl EmbeddingStore {
    /// Builds a store from explicit row-major matrices.
    pub fn from_rows(
        users: Vec<f64>,
        items: Vec<f64>,
        dim: usize,
        curvature: Curvature,
        variant: Variant,
    ) -> Result<Self> {
        if dim == 0 || users.len() % dim != 0 || items.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "matrix sizes {} / {} are not multiples of dim {dim}",
                users.len(),
                items.len()
            )));
        }
        let store = EmbeddingStore {
            n_users: users.len() / dim,
            n_items: items.len() / dim,
            users,
            items,
            dim,
            curvature,
            variant,
        };
        store.check_invariants()?;
        Ok(store)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn user(&self, u: usize) -> Result<&[f64]> {
        if u >= self.n_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: u,
                len: self.n_users,
            });
        }
        Ok(&self.users[u * self.dim..(u + 1) * self.dim])
    }

    pub fn item(&self, i: usize) -> Result<&[f64]> {
        if i >= self.n_items {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i,
                len: self.n_items,
            });
        }
        Ok(&self.items[i * self.dim..(i + 1) * self.dim])
    }

    pub fn user_mut(&mut self, u: usize) -> Result<&mut [f64]> {
        self.user(u)?;
        Ok(&mut self.users[u * self.dim..(u + 1) * self.dim])
    }

    pub fn item_mut(&mut self, i: usize) -> Result<&mut [f64]> {
        self.item(i)?;
        Ok(&mut self.items[i * self.dim..(i + 1) * self.dim])
    }

    pub fn user_matrix(&self) -> &[f64] {
        &self.users
    }

    pub fn item_matrix(&self) -> &[f64] {
        &self.items
    }

    /// The (user, positive item, negative item) rows of a triplet.
    pub fn lookup_triplet(&self, t: Triplet) -> Result<(&[f64], &[f64], &[f64])> {
        Ok((
            self.user(t.user as usize)?,
            self.item(t.pos_item as usize)?,
            self.item(t.neg_item as usize)?,
        ))
    }

    /// Largest admissible row norm for this store.
    pub fn max_row_norm(&self) -> f64 {
        match self.variant {
            Variant::Cml => 1.0,
            Variant::Hyper | Variant::HyperTs => self.curvature.max_norm(),
        }
    }

    /// Checks that every row is finite and inside the admissible region.
    pub fn check_invariants(&self) -> Result<()> {
        let max = self.max_row_norm();
        for (what, matrix) in [("user", &self.users), ("item", &self.items)] {
            for (idx, row) in matrix.chunks_exact(self.dim).enumerate() {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("{what} row {idx}")));
                }
                let n = gyrovector::norm(row);
                if n > max {
                    return Err(Error::Degenerate(format!(
                        "{what} row {idx} has norm {n} above the bound {max}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Maximum Euclidean row norm over both tables.
    pub fn max_norm(&self) -> f64 {
        self.users
            .chunks_exact(self.dim)
            .chain(self.items.chunks_exact(self.dim))
            .map(gyrovector::norm)
            .fold(0.0, f64::max)
    }
}

/// Float formatting for embedding files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 9 significant digits, for external tools.
    Export,
    /// Shortest representation that round-trips exactly.
    Lossless,
}

/// Formats `v` like C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn format_float(v: f64, precision: Precision) -> String {
    match precision {
        Precision::Export => format_sig9(v),
        Precision::Lossless => format!("{v:?}"),
    }
}

/// Writes the store in the text embedding format:
/// header `n_users n_items dim c variant [epoch]`, then `u <id> <floats>` and
/// `i <id> <floats>` rows using the dataset's external ids.
pub fn write_embeddings(
    path: &Path,
    store: &EmbeddingStore,
    ds: &Dataset,
    precision: Precision,
    epoch: Option<usize>,
) -> Result<()> {
    if ds.n_users() != store.n_users() || ds.n_items() != store.n_items() {
        return Err(Error::InvalidInput(format!(
            "store has {}x{} rows but dataset has {} users and {} items",
            store.n_users(),
            store.n_items(),
            ds.n_users(),
            ds.n_items()
        )));
    }
    let users = (0..store.n_users()).map(|u| (ds.user_label(u), &store.user_matrix()[u * store.dim()..(u + 1) * store.dim()]));
    let items = (0..store.n_items()).map(|i| (ds.item_label(i), &store.item_matrix()[i * store.dim()..(i + 1) * store.dim()]));
    write_rows(
        path,
        (store.n_users(), store.n_items(), store.dim()),
        store.curvature(),
        store.variant(),
        precision,
        epoch,
        users,
        items,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_rows<'a>(
    path: &Path,
    (n_users, n_items, dim): (usize, usize, usize),
    curvature: Curvature,
    variant: Variant,
    precision: Precision,
    epoch: Option<usize>,
    users: impl Iterator<Item = (&'a str, &'a [f64])>,
    items: impl Iterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    let mut header = format!(
        "{n_users} {n_items} {dim} {} {variant}",
        format_float(curvature.value(), precision),
    );
    if let Some(epoch) = epoch {
        header.push_str(&format!(" {epoch}"));
    }
    writeln!(w, "{header}").map_err(io_err)?;
    for (kind, rows) in [("u", Box::new(users) as Box<dyn Iterator<Item = _>>), ("i", Box::new(items))] {
        for (label, row) in rows {
            write!(w, "{kind} {label}").map_err(io_err)?;
            for v in row {
                write!(w, " {}", format_float(*v, precision)).map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// An embedding file parsed back into memory, rows keyed by external id.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub dim: usize,
    pub curvature: Curvature,
    pub variant: Variant,
    pub epoch: Option<usize>,
    pub users: Vec<(String, Vec<f64>)>,
    pub items: Vec<(String, Vec<f64>)>,
}

pub fn read_embeddings(path: &Path) -> Result<LoadedEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::Empty(format!("{}", path.display()))),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 && fields.len() != 6 {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `n_users n_items dim c variant [epoch]`".into(),
        });
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("invalid {what} `{s}`"),
        })
    };
    let n_users = parse_usize(fields[0], "n_users")?;
    let n_items = parse_usize(fields[1], "n_items")?;
    let dim = parse_usize(fields[2], "dim")?;
    let c: f64 = fields[3].parse().map_err(|_| Error::Parse {
        line: 1,
        msg: format!("invalid curvature `{}`", fields[3]),
    })?;
    let curvature = Curvature::new(c)?;
    let variant: Variant = fields[4].parse()?;
    let epoch = fields.get(5).map(|s| parse_usize(s, "epoch")).transpose()?;

    let mut users = Vec::with_capacity(n_users);
    let mut items = Vec::with_capacity(n_items);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let id = parts.next().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "missing id".into(),
        })?;
        let coords = parts
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid float `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if coords.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {dim} coordinates, found {}", coords.len()),
            });
        }
        match kind {
            "u" => users.push((id.to_string(), coords)),
            "i" => items.push((id.to_string(), coords)),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("row kind must be `u` or `i`, found `{other}`"),
                })
            }
        }
    }
    if users.len() != n_users || items.len() != n_items {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "header announces {n_users} users / {n_items} items but file has {} / {}",
                users.len(),
                items.len()
            ),
        });
    }
    Ok(LoadedEmbeddings {
        dim,
        curvature,
        variant,
        epoch,
        users,
        items,
    })
}

impl LoadedEmbeddings {
    /// Writes the rows back out, keeping their file order.
    pub fn write(&self, path: &Path, precision: Precision) -> Result<()> {
        write_rows(
            path,
            (self.users.len(), self.items.len(), self.dim),
            self.curvature,
            self.variant,
            precision,
            match precision {
                Precision::Export => None,
                Precision::Lossless => self.epoch,
            },
            self.users.iter().map(|(l, r)| (l.as_str(), r.as_slice())),
            self.items.iter().map(|(l, r)| (l.as_str(), r.as_slice())),
        )
    }

    /// Reorders rows to the dataset's internal ids.
    pub fn into_store(self, ds: &Dataset) -> Result<EmbeddingStore> {
        if self.users.len() != ds.n_users() || self.items.len() != ds.n_items() {
            return Err(Error::InvalidInput(format!(
                "checkpoint has {} users / {} items, dataset has {} / {}",
                self.users.len(),
                self.items.len(),
                ds.n_users(),
                ds.n_items()
            )));
        }
        let dim = self.dim;
        let mut users = vec![0.0; ds.n_users() * dim];
        for (label, row) in &self.users {
            let u = ds.user_index(label).ok_or_else(|| {
                Error::InvalidInput(format!("checkpoint user `{label}` is not in the dataset"))
            })?;
            users[u * dim..(u + 1) * dim].copy_from_slice(row);
        }
        let mut items = vec![0.0; ds.n_items() * dim];
        for (label, row) in &self.items {
            let i = ds.item_index(label).ok_or_else(|| {
                Error::InvalidInput(format!("checkpoint item `{label}` is not in the dataset"))
            })?;
            items[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        EmbeddingStore::from_rows(users, items, dim, self.curvature, self.variant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, seed: u64) -> InitConfig {
        InitConfig {
            beta: 0.01,
            dim,
            seed,
        }
    }

    #[test]
    fn alpha_values() {
        // (3·10⁻⁴/128)^(1/3) and (3·10⁻⁴/4)^(1/3), evaluated in high precision.
        assert!((cfg(64, 0).alpha() - 0.013_283_232_114_782_638).abs() < 1e-15);
        assert!((cfg(2, 0).alpha() - 0.042_171_633_265_087_46).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_embeddings(7, 11, cfg(64, 42), Curvature::UNIT, Variant::Hyper).unwrap();
        let b = init_embeddings(7, 11, cfg(64, 42), Curvature::UNIT, Variant::Hyper).unwrap();
        assert_eq!(a, b);
        let alpha = cfg(64, 42).alpha();
        assert!(a.user_matrix().iter().all(|v| v.abs() < alpha));
        assert!(a.item_matrix().iter().all(|v| v.abs() < alpha));
        let c = init_embeddings(7, 11, cfg(64, 43), Curvature::UNIT, Variant::Hyper).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rows_fit_every_supported_ball() {
        let c8 = Curvature::new(8.0).unwrap();
        let s = init_embeddings(50, 80, cfg(64, 1), c8, Variant::Hyper).unwrap();
        let bound = cfg(64, 1).alpha() * 8.0;
        assert!(s.max_norm() <= bound);
        assert!(bound < 1.0 / 8f64.sqrt());
    }

    #[test]
    fn init_rejects_empty_tables() {
        assert!(init_embeddings(0, 3, cfg(4, 0), Curvature::UNIT, Variant::Hyper).is_err());
        assert!(init_embeddings(3, 0, cfg(4, 0), Curvature::UNIT, Variant::Hyper).is_err());
    }

    #[test]
    fn lookup_triplet_indexes_rows() {
        let s = init_embeddings(1, 2, cfg(3, 9), Curvature::UNIT, Variant::Hyper).unwrap();
        let (u, p, n) = s
            .lookup_triplet(Triplet {
                user: 0,
                pos_item: 0,
                neg_item: 1,
            })
            .unwrap();
        assert_eq!(u, s.user(0).unwrap());
        assert_eq!(p, s.item(0).unwrap());
        assert_eq!(n, s.item(1).unwrap());
        assert!(matches!(
            s.lookup_triplet(Triplet {
                user: 0,
                pos_item: 5,
                neg_item: 1
            }),
            Err(Error::IndexOutOfRange { what: "item", .. })
        ));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.013_283_232_114_782_638), "0.0132832321");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(123_456_789.4), "123456789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(2.0e12), "2e+12");
        let v = -0.123_456_789_123;
        let back: f64 = format_sig9(v).parse().unwrap();
        assert!((back - v).abs() <= 1e-9 * v.abs());
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("lrml".parse::<Variant>().is_err());
    }
}
