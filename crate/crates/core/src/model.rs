//! Multivariate-linear parametrisation of per-network ERGM parameters.
//!
//! Network `s` with covariate row `x_s` (length `q`) gets parameters
//! `θ_s = ((B + O)ᵀ x_sᵀ)`, where `B` is the `q×p` coefficient matrix and `O`
//! an optional fixed offset. Estimation works in reduced coordinates: the
//! free (unmasked) entries of `vec(B)`, in column-major order, so
//! coordinate `(k, l)` is "covariate `k` acting on statistic `l`".

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::Network;
use crate::stats::{StatisticSpec, StatsError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ensemble must contain at least one network")]
    Empty,
    #[error("duplicate covariate name `{0}`")]
    DuplicateCovariate(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Covariate rows for every network, sharing one set of names.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCovariates {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl NetworkCovariates {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for (k, name) in names.iter().enumerate() {
            if names[..k].contains(name) {
                return Err(ModelError::DuplicateCovariate(name.clone()));
            }
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(ModelError::Dimension(format!(
                "covariate row {bad} has {} entries, expected {}",
                rows[bad].len(),
                names.len()
            )));
        }
        Ok(NetworkCovariates { names, rows })
    }

    /// A single intercept column for `s` networks.
    pub fn intercept(s: usize) -> Self {
        NetworkCovariates { names: vec!["1".into()], rows: vec![vec![1.0]; s] }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn q(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// `q×p` coefficient matrix with a sparsity mask and optional offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    coef: DMatrix<f64>,
    mask: DMatrix<bool>,
    offset: Option<DMatrix<f64>>,
}

impl ParamMatrix {
    /// All-zero, all-free `q×p` matrix.
    pub fn zeros(q: usize, p: usize) -> Self {
        ParamMatrix {
            coef: DMatrix::zeros(q, p),
            mask: DMatrix::from_element(q, p, true),
            offset: None,
        }
    }

    pub fn new(
        coef: DMatrix<f64>,
        mask: DMatrix<bool>,
        offset: Option<DMatrix<f64>>,
    ) -> Result<Self, ModelError> {
        if coef.shape() != mask.shape() {
            return Err(ModelError::Dimension(format!(
                "coefficient shape {:?} vs mask shape {:?}",
                coef.shape(),
                mask.shape()
            )));
        }
        if let Some(o) = &offset {
            if o.shape() != coef.shape() {
                return Err(ModelError::Dimension(format!(
                    "offset shape {:?} vs coefficient shape {:?}",
                    o.shape(),
                    coef.shape()
                )));
            }
        }
        let mut coef = coef;
        for (c, &m) in coef.iter_mut().zip(mask.iter()) {
            if !m {
                *c = 0.0;
            }
        }
        Ok(ParamMatrix { coef, mask, offset })
    }

    /// Intercept-only model (`q = 1`) with coefficients `theta`.
    pub fn from_theta(theta: &[f64]) -> Self {
        let mut b = Self::zeros(1, theta.len());
        b.coef.row_mut(0).copy_from_slice(theta);
        b
    }

    pub fn q(&self) -> usize {
        self.coef.nrows()
    }

    pub fn p(&self) -> usize {
        self.coef.ncols()
    }

    pub fn coef(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn offset(&self) -> Option<&DMatrix<f64>> {
        self.offset.as_ref()
    }

    pub fn set_offset(&mut self, offset: Option<DMatrix<f64>>) {
        self.offset = offset;
    }

    pub fn fix_at_zero(&mut self, k: usize, l: usize) {
        self.mask[(k, l)] = false;
        self.coef[(k, l)] = 0.0;
    }

    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        if self.mask[(k, l)] {
            self.coef[(k, l)] = v;
        }
    }

    /// Number of free coordinates.
    pub fn k(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(covariate, statistic)` index of each free coordinate, in `vec` order.
    pub fn free_coords(&self) -> Vec<(usize, usize)> {
        let q = self.q();
        (0..self.mask.len())
            .filter(|&v| self.mask[v])
            .map(|v| (v % q, v / q))
            .collect()
    }

    /// Free entries of `vec(B)`.
    pub fn vec_free(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.k(),
            self.coef.iter().zip(self.mask.iter()).filter(|(_, &m)| m).map(|(&c, _)| c),
        )
    }

    pub fn with_free(&self, v: &DVector<f64>) -> Result<Self, ModelError> {
        if v.len() != self.k() {
            return Err(ModelError::Dimension(format!(
                "free vector has length {}, expected {}",
                v.len(),
                self.k()
            )));
        }
        let mut out = self.clone();
        let mut it = v.iter();
        for (c, &m) in out.coef.iter_mut().zip(self.mask.iter()) {
            if m {
                *c = *it.next().unwrap();
            }
        }
        Ok(out)
    }

    pub fn coord_names(&self, covariates: &[String], stats: &[String]) -> Vec<String> {
        self.free_coords()
            .into_iter()
            .map(|(k, l)| {
                if covariates[k] == "1" {
                    stats[l].clone()
                } else {
                    format!("{}:{}", stats[l], covariates[k])
                }
            })
            .collect()
    }
}

/// `θ_s = ((B + O)ᵀ x_sᵀ)`.
pub fn theta_for(b: &ParamMatrix, x: &[f64]) -> Result<DVector<f64>, ModelError> {
    if x.len() != b.q() {
        return Err(ModelError::Dimension(format!(
            "covariate row has {} entries, coefficient matrix has {} rows",
            x.len(),
            b.q()
        )));
    }
    let x = DVector::from_column_slice(x);
    let mut theta = b.coef.tr_mul(&x);
    if let Some(o) = &b.offset {
        theta += o.tr_mul(&x);
    }
    Ok(theta)
}

/// Full Kronecker design `Z_s = I_p ⊗ x_s` (`p × q·p`).
pub fn design_matrix(x: &[f64], p: usize) -> DMatrix<f64> {
    let q = x.len();
    let mut z = DMatrix::zeros(p, q * p);
    for l in 0..p {
        for (k, &xk) in x.iter().enumerate() {
            z[(l, l * q + k)] = xk;
        }
    }
    z
}

/// `Z_s` with the columns of masked entries dropped (`p × k`).
pub fn reduced_design(x: &[f64], b: &ParamMatrix) -> DMatrix<f64> {
    let coords = b.free_coords();
    let mut z = DMatrix::zeros(b.p(), coords.len());
    for (c, &(k, l)) in coords.iter().enumerate() {
        z[(l, c)] = x[k];
    }
    z
}

/// Lifts a per-network `p`-vector to reduced coordinates: `Z_sᵀ v`.
pub fn lift_vector(x: &[f64], b: &ParamMatrix, v: &[f64]) -> DVector<f64> {
    let coords = b.free_coords();
    DVector::from_iterator(coords.len(), coords.iter().map(|&(k, l)| x[k] * v[l]))
}

/// `Z_sᵀ M Z_s` for a per-network `p×p` matrix.
pub fn lift_matrix(x: &[f64], b: &ParamMatrix, m: &DMatrix<f64>) -> DMatrix<f64> {
    let coords = b.free_coords();
    let k = coords.len();
    DMatrix::from_fn(k, k, |a, c| {
        let (ka, la) = coords[a];
        let (kc, lc) = coords[c];
        x[ka] * x[kc] * m[(la, lc)]
    })
}

/// Networks with their covariate rows, shared statistic spec and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    networks: Vec<Network>,
    covariates: NetworkCovariates,
    spec: StatisticSpec,
    tags: Vec<Vec<String>>,
}

impl Ensemble {
    pub fn new(
        networks: Vec<Network>,
        covariates: NetworkCovariates,
        spec: StatisticSpec,
        tags: Vec<Vec<String>>,
    ) -> Result<Self, ModelError> {
        if networks.is_empty() {
            return Err(ModelError::Empty);
        }
        if covariates.len() != networks.len() || tags.len() != networks.len() {
            return Err(ModelError::Dimension(format!(
                "{} networks, {} covariate rows, {} tag lists",
                networks.len(),
                covariates.len(),
                tags.len()
            )));
        }
        for net in &networks {
            spec.prepare(net)?;
        }
        Ok(Ensemble { networks, covariates, spec, tags })
    }

    /// Intercept-only ensemble without tags.
    pub fn simple(networks: Vec<Network>, spec: StatisticSpec) -> Result<Self, ModelError> {
        let s = networks.len();
        Self::new(networks, NetworkCovariates::intercept(s), spec, vec![Vec::new(); s])
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    pub fn network(&self, s: usize) -> &Network {
        &self.networks[s]
    }

    pub fn covariates(&self) -> &NetworkCovariates {
        &self.covariates
    }

    pub fn x(&self, s: usize) -> &[f64] {
        self.covariates.row(s)
    }

    pub fn spec(&self) -> &StatisticSpec {
        &self.spec
    }

    pub fn tags(&self, s: usize) -> &[String] {
        &self.tags[s]
    }

    pub fn all_tags(&self) -> &[Vec<String>] {
        &self.tags
    }

    /// Tag list joined with `+`, or `all` when untagged.
    pub fn tag_group(&self, s: usize) -> String {
        if self.tags[s].is_empty() {
            "all".into()
        } else {
            self.tags[s].join("+")
        }
    }

    pub fn theta(&self, b: &ParamMatrix, s: usize) -> Result<DVector<f64>, ModelError> {
        theta_for(b, self.x(s))
    }

    /// Same covariates, spec and tags with different networks.
    pub fn with_networks(&self, networks: Vec<Network>) -> Result<Self, ModelError> {
        Self::new(networks, self.covariates.clone(), self.spec.clone(), self.tags.clone())
    }

    pub fn with_spec(&self, spec: StatisticSpec) -> Result<Self, ModelError> {
        Self::new(self.networks.clone(), self.covariates.clone(), spec, self.tags.clone())
    }

    /// Networks `idx` as a new ensemble.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, ModelError> {
        Self::new(
            idx.iter().map(|&s| self.networks[s].clone()).collect(),
            NetworkCovariates::new(
                self.covariates.names.clone(),
                idx.iter().map(|&s| self.covariates.rows[s].clone()).collect(),
            )?,
            self.spec.clone(),
            idx.iter().map(|&s| self.tags[s].clone()).collect(),
        )
    }

    /// Total number of observed dyads.
    pub fn observed_dyads(&self) -> usize {
        self.networks.iter().map(|n| n.num_dyads() - n.free_count()).sum()
    }
}

/// `Σ_s Z_sᵀ g_s(y_s)` over `nets` (defaults to the ensemble's own networks
/// as currently imputed), in reduced coordinates.
pub fn aggregate_suffstat(
    ens: &Ensemble,
    b: &ParamMatrix,
    nets: Option<&[Network]>,
) -> Result<DVector<f64>, ModelError> {
    let nets = nets.unwrap_or(ens.networks());
    if nets.len() != ens.len() {
        return Err(ModelError::Dimension(format!(
            "{} networks for an ensemble of {}",
            nets.len(),
            ens.len()
        )));
    }
    if b.p() != ens.spec().p() || b.q() != ens.covariates().q() {
        return Err(ModelError::Dimension(format!(
            "coefficient matrix is {}x{}, model needs {}x{}",
            b.q(),
            b.p(),
            ens.covariates().q(),
            ens.spec().p()
        )));
    }
    let parts = nets
        .iter()
        .enumerate()
        .map(|(s, net)| {
            let g = crate::stats::eval_stats(net, ens.spec())?;
            Ok(lift_vector(ens.x(s), b, &g))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(crate::linalg::pairwise_sum_vec(&parts, b.k()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::eval_stats;
    use proptest::prelude::*;

    #[test]
    fn identity_design() {
        let b = ParamMatrix::from_theta(&[0.5, -1.0, 2.0]);
        assert_eq!(theta_for(&b, &[1.0]).unwrap().as_slice(), &[0.5, -1.0, 2.0]);
        let z = ParamMatrix::zeros(2, 3);
        assert_eq!(theta_for(&z, &[1.0, 7.0]).unwrap().as_slice(), &[0.0; 3]);
        assert!(matches!(theta_for(&z, &[1.0]), Err(ModelError::Dimension(_))));
    }

    #[test]
    fn log_size_edge_coefficient() {
        let mut b = ParamMatrix::zeros(2, 2);
        b.set(0, 0, -0.4);
        b.set(1, 0, -1.0);
        b.fix_at_zero(1, 1);
        b.set(0, 1, 0.3);
        let n = 5.0f64;
        let theta = theta_for(&b, &[1.0, n.ln()]).unwrap();
        assert!((theta[0] - (-0.4 - n.ln())).abs() < 1e-15);
        assert_eq!(theta[1], 0.3);
        assert_eq!(b.k(), 3);
    }

    #[test]
    fn offsets_shift_theta_but_not_free_vector() {
        let mut b = ParamMatrix::zeros(2, 1);
        b.fix_at_zero(1, 0);
        b.set_offset(Some(DMatrix::from_column_slice(2, 1, &[0.0, -1.0])));
        let theta = theta_for(&b, &[1.0, 2.0f64.ln()]).unwrap();
        assert!((theta[0] + 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(b.vec_free().len(), 1);
    }

    #[test]
    fn kronecker_blocks() {
        assert_eq!(design_matrix(&[2.0, 3.0], 1), DMatrix::from_row_slice(1, 2, &[2.0, 3.0]));
        assert_eq!(design_matrix(&[1.0], 3), DMatrix::identity(3, 3));
        let z = design_matrix(&[2.0, 3.0], 2);
        assert_eq!(z, DMatrix::from_row_slice(2, 4, &[2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 2.0, 3.0]));
    }

    #[test]
    fn aggregate_examples() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let net = Network::from_edges("a", 4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let single = Ensemble::simple(vec![net.clone()], spec.clone()).unwrap();
        let b = ParamMatrix::zeros(1, 3);
        let g = eval_stats(&net, &spec).unwrap();
        assert_eq!(aggregate_suffstat(&single, &b, None).unwrap().as_slice(), g.as_slice());

        let empties = Ensemble::simple(vec![Network::new("e1", 4).unwrap(), Network::new("e2", 3).unwrap()], spec.clone())
            .unwrap();
        assert!(aggregate_suffstat(&empties, &b, None).unwrap().iter().all(|&v| v == 0.0));

        let mut twin = net.clone();
        twin.set_id("b");
        let double = Ensemble::simple(vec![net, twin], spec).unwrap();
        let agg = aggregate_suffstat(&double, &b, None).unwrap();
        assert_eq!(agg.as_slice(), g.iter().map(|v| 2.0 * v).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn aggregate_is_additive_over_concatenation() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let nets = vec![
            Network::from_edges("a", 4, &[(0, 1), (1, 2)]).unwrap(),
            Network::complete("b", 3).unwrap(),
            Network::from_edges("c", 5, &[(0, 4), (3, 4), (0, 3)]).unwrap(),
        ];
        let cov = |rows: Vec<Vec<f64>>| NetworkCovariates::new(vec!["1".into(), "log_n".into()], rows).unwrap();
        let rows: Vec<Vec<f64>> = nets.iter().map(|n| vec![1.0, (n.n() as f64).ln()]).collect();
        let all = Ensemble::new(nets.clone(), cov(rows.clone()), spec.clone(), vec![vec![]; 3]).unwrap();
        let left = Ensemble::new(nets[..1].to_vec(), cov(rows[..1].to_vec()), spec.clone(), vec![vec![]]).unwrap();
        let right = Ensemble::new(nets[1..].to_vec(), cov(rows[1..].to_vec()), spec, vec![vec![]; 2]).unwrap();
        let b = ParamMatrix::zeros(2, 3);
        let sum = aggregate_suffstat(&left, &b, None).unwrap() + aggregate_suffstat(&right, &b, None).unwrap();
        let whole = aggregate_suffstat(&all, &b, None).unwrap();
        assert!((sum - whole).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn theta_equals_reduced_design_times_free_vector(
            q in 1usize..4, p in 1usize..4,
            vals in proptest::collection::vec(-3.0f64..3.0, 16),
            xs in proptest::collection::vec(-2.0f64..2.0, 4),
            mask_bits in proptest::collection::vec(any::<bool>(), 16),
        ) {
            let mut b = ParamMatrix::zeros(q, p);
            for k in 0..q { for l in 0..p {
                b.set(k, l, vals[k * 4 + l]);
                if !mask_bits[k * 4 + l] { b.fix_at_zero(k, l); }
            }}
            let x = &xs[..q];
            let direct = theta_for(&b, x).unwrap();
            let via_design = reduced_design(x, &b) * b.vec_free();
            prop_assert!((direct - &via_design).amax() < 1e-12);
            let full = design_matrix(x, p) * DVector::from_column_slice(b.coef().as_slice());
            prop_assert!((full - via_design).amax() < 1e-12);
        }
    }
}
