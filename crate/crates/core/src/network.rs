//! Measure networks, hypernetworks and semi-coupling pairs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_weights(weights: ArrayView1<f64>) -> Result<()> {
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { row: index, col: 0 });
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

fn check_kernel_entries(kernel: ArrayView2<f64>) -> Result<()> {
    for ((row, col), &value) in kernel.indexed_iter() {
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { row, col });
        }
        if value < 0.0 {
            return Err(Error::NegativeKernelEntry { row, col, value });
        }
    }
    Ok(())
}

fn rows_to_array(rows: &[Vec<f64>], cols_hint: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let cols = rows.first().map_or(cols_hint, Vec::len);
    let mut out = Array2::zeros((n, cols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

fn array_to_rows(a: ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A finite point set with nonnegative weights and a bounded square kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasureNetwork {
    weights: Array1<f64>,
    kernel: Array2<f64>,
    points: Option<Array2<f64>>,
    label: Option<String>,
    mass: f64,
}

impl DiscreteMeasureNetwork {
    /// Validates raw weights and kernel.
    pub fn new(weights: Array1<f64>, kernel: Array2<f64>) -> Result<Self> {
        check_weights(weights.view())?;
        let n = weights.len();
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::NonSquareKernel {
                expected: n,
                rows: kernel.nrows(),
                cols: kernel.ncols(),
            });
        }
        check_kernel_entries(kernel.view())?;
        let mass = weights.sum();
        Ok(Self {
            weights,
            kernel,
            points: None,
            label: None,
            mass,
        })
    }

    pub fn from_vecs(weights: Vec<f64>, kernel: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        let kernel = rows_to_array(&kernel, n)?;
        Self::new(Array1::from(weights), kernel)
    }

    pub fn with_points(mut self, points: Array2<f64>) -> Result<Self> {
        if points.nrows() != self.len() {
            return Err(Error::LengthMismatch {
                left: points.nrows(),
                right: self.len(),
            });
        }
        if let Some(((row, col), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        self.points = Some(points);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn points(&self) -> Option<&Array2<f64>> {
        self.points.as_ref()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Total mass, computed once at validation.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// The network with every weight multiplied by `r`; the kernel is untouched.
    pub fn scale_measure(&self, r: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::NonFinite(r));
        }
        if r < 0.0 {
            return Err(Error::NegativeScale(r));
        }
        let weights = self.weights.mapv(|w| w * r);
        let mass = weights.sum();
        Ok(Self {
            weights,
            kernel: self.kernel.clone(),
            points: self.points.clone(),
            label: self.label.clone(),
            mass,
        })
    }

    /// Replaces the weights, keeping kernel, points and label.
    pub fn with_weights(&self, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: self.len(),
            });
        }
        check_weights(weights.view())?;
        let mass = weights.sum();
        Ok(Self {
            weights,
            kernel: self.kernel.clone(),
            points: self.points.clone(),
            label: self.label.clone(),
            mass,
        })
    }

    /// Rescales to unit total mass. Fails on a null measure.
    pub fn normalized(&self) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(Error::MassMismatch {
                left: self.mass,
                right: 1.0,
            });
        }
        self.scale_measure(1.0 / self.mass)
    }

    /// Views the network as a hypernetwork whose samples and features are both
    /// the points of the network.
    pub fn to_hypernetwork(&self) -> DiscreteMeasureHypernetwork {
        DiscreteMeasureHypernetwork {
            sample_weights: self.weights.clone(),
            feature_weights: self.weights.clone(),
            kernel: self.kernel.clone(),
            sample_mass: self.mass,
            feature_mass: self.mass,
        }
    }

    /// Reorders points so that new index `i` holds old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: n,
            });
        }
        let weights = Array1::from_iter(perm.iter().map(|&p| self.weights[p]));
        let kernel = Array2::from_shape_fn((n, n), |(i, j)| self.kernel[[perm[i], perm[j]]]);
        let mut out = Self::new(weights, kernel)?;
        if let Some(points) = &self.points {
            out.points = Some(points.select(Axis(0), perm));
        }
        out.label = self.label.clone();
        Ok(out)
    }

    /// Splits point `index` into two colocated copies carrying `fraction` and
    /// `1 - fraction` of its mass. The copy is appended as the last point.
    pub fn split_point(&self, index: usize, fraction: f64) -> Result<Self> {
        let n = self.len();
        if index >= n {
            return Err(Error::DimensionMismatch(format!(
                "split index {index} out of range for {n} points"
            )));
        }
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!(
                "split fraction {fraction} outside [0, 1]"
            )));
        }
        let src = |i: usize| if i == n { index } else { i };
        let mut weights = Array1::from_iter((0..=n).map(|i| self.weights[src(i)]));
        weights[index] = self.weights[index] * fraction;
        weights[n] = self.weights[index] * (1.0 - fraction);
        let kernel = Array2::from_shape_fn((n + 1, n + 1), |(i, j)| self.kernel[[src(i), src(j)]]);
        let mut out = Self::new(weights, kernel)?;
        if let Some(points) = &self.points {
            let idx: Vec<usize> = (0..=n).map(src).collect();
            out.points = Some(points.select(Axis(0), &idx));
        }
        out.label = self.label.clone();
        Ok(out)
    }
}

/// Two weighted point sets (samples and features) with a rectangular kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasureHypernetwork {
    sample_weights: Array1<f64>,
    feature_weights: Array1<f64>,
    kernel: Array2<f64>,
    sample_mass: f64,
    feature_mass: f64,
}

impl DiscreteMeasureHypernetwork {
    pub fn new(
        sample_weights: Array1<f64>,
        feature_weights: Array1<f64>,
        kernel: Array2<f64>,
    ) -> Result<Self> {
        check_weights(sample_weights.view())?;
        check_weights(feature_weights.view())?;
        if kernel.nrows() != sample_weights.len() || kernel.ncols() != feature_weights.len() {
            return Err(Error::KernelShape {
                expected_rows: sample_weights.len(),
                expected_cols: feature_weights.len(),
                rows: kernel.nrows(),
                cols: kernel.ncols(),
            });
        }
        check_kernel_entries(kernel.view())?;
        let sample_mass = sample_weights.sum();
        let feature_mass = feature_weights.sum();
        Ok(Self {
            sample_weights,
            feature_weights,
            kernel,
            sample_mass,
            feature_mass,
        })
    }

    /// Uniform probability weights on both axes.
    pub fn uniform(kernel: Array2<f64>) -> Result<Self> {
        let (n, p) = kernel.dim();
        let sw = Array1::from_elem(n, if n > 0 { 1.0 / n as f64 } else { 0.0 });
        let fw = Array1::from_elem(p, if p > 0 { 1.0 / p as f64 } else { 0.0 });
        Self::new(sw, fw, kernel)
    }

    pub fn sample_weights(&self) -> &Array1<f64> {
        &self.sample_weights
    }

    pub fn feature_weights(&self) -> &Array1<f64> {
        &self.feature_weights
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn sample_mass(&self) -> f64 {
        self.sample_mass
    }

    pub fn feature_mass(&self) -> f64 {
        self.feature_mass
    }

    pub fn n_samples(&self) -> usize {
        self.sample_weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_weights.len()
    }
}

/// A finitely supported measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteValueMeasure {
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteValueMeasure {
    /// Builds a measure from (value, mass) atoms; atoms whose values lie within
    /// `coalesce_tol` of the running group representative are merged.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>, coalesce_tol: f64) -> Result<Self> {
        for (i, &(v, m)) in atoms.iter().enumerate() {
            if !v.is_finite() || !m.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: 0 });
            }
            if m < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: m });
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::new();
        let mut masses: Vec<f64> = Vec::new();
        for (v, m) in atoms {
            match values.last() {
                Some(&last) if (v - last).abs() <= coalesce_tol => {
                    *masses.last_mut().unwrap() += m;
                }
                _ => {
                    values.push(v);
                    masses.push(m);
                }
            }
        }
        Ok(Self { values, masses })
    }

    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            masses: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A pair of nonnegative plans `(A, B)` where only the row sums of `A` and the
/// column sums of `B` are constrained (from above) by the two marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiCouplingPair {
    pub row_plan: Array2<f64>,
    pub col_plan: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
}

impl SemiCouplingPair {
    pub fn zeros(row_marginal: Array1<f64>, col_marginal: Array1<f64>) -> Self {
        let shape = (row_marginal.len(), col_marginal.len());
        Self {
            row_plan: Array2::zeros(shape),
            col_plan: Array2::zeros(shape),
            row_marginal,
            col_marginal,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.row_plan.dim()
    }

    /// Checks nonnegativity and the two inequality marginals up to `tol`
    /// (relative to the marginal entry, with an absolute floor of `tol`).
    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        let shape = (self.row_marginal.len(), self.col_marginal.len());
        if self.row_plan.dim() != shape || self.col_plan.dim() != shape {
            return Err(Error::DimensionMismatch(format!(
                "plans {:?}/{:?} vs marginals {:?}",
                self.row_plan.dim(),
                self.col_plan.dim(),
                shape
            )));
        }
        for plan in [&self.row_plan, &self.col_plan] {
            if let Some(((row, col), &value)) = plan.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::NegativeKernelEntry { row, col, value });
            }
        }
        for (i, s) in self.row_plan.sum_axis(Axis(1)).iter().enumerate() {
            let cap = self.row_marginal[i];
            if *s > cap + tol * cap.max(1.0) {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} of the row plan sums to {s} > {cap}"
                )));
            }
        }
        for (k, s) in self.col_plan.sum_axis(Axis(0)).iter().enumerate() {
            let cap = self.col_marginal[k];
            if *s > cap + tol * cap.max(1.0) {
                return Err(Error::DimensionMismatch(format!(
                    "column {k} of the column plan sums to {s} > {cap}"
                )));
            }
        }
        Ok(())
    }

    /// Elementwise `sqrt(A * B)`, the soft matching carried by the pair.
    pub fn matching(&self) -> Array2<f64> {
        let mut out = self.row_plan.clone();
        out.zip_mut_with(&self.col_plan, |a, &b| *a = (*a * b).sqrt());
        out
    }

    pub fn scaled(&self, r: f64) -> Self {
        Self {
            row_plan: self.row_plan.mapv(|v| v * r),
            col_plan: self.col_plan.mapv(|v| v * r),
            row_marginal: self.row_marginal.mapv(|v| v * r),
            col_marginal: self.col_marginal.mapv(|v| v * r),
        }
    }
}

/// Total-variation norm of the signed difference of two weight vectors.
pub fn tv_gap(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// On-disk JSON representation, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum NetworkDocument {
    #[serde(rename = "measure_network")]
    Network {
        weights: Vec<f64>,
        kernel: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    #[serde(rename = "measure_hypernetwork")]
    Hypernetwork {
        sample_weights: Vec<f64>,
        feature_weights: Vec<f64>,
        kernel: Vec<Vec<f64>>,
    },
}

impl NetworkDocument {
    pub fn into_network(self) -> Result<DiscreteMeasureNetwork> {
        match self {
            NetworkDocument::Network {
                weights,
                kernel,
                points,
                label,
            } => {
                let mut net = DiscreteMeasureNetwork::from_vecs(weights, kernel)?;
                if let Some(points) = points {
                    let dim = points.first().map_or(0, Vec::len);
                    net = net.with_points(rows_to_array(&points, dim)?)?;
                }
                if let Some(label) = label {
                    net = net.with_label(label);
                }
                Ok(net)
            }
            NetworkDocument::Hypernetwork { .. } => Err(Error::InvalidConfig(
                "expected a measure_network document, found a measure_hypernetwork".into(),
            )),
        }
    }

    /// Networks are accepted too and embedded as hypernetworks.
    pub fn into_hypernetwork(self) -> Result<DiscreteMeasureHypernetwork> {
        match self {
            NetworkDocument::Hypernetwork {
                sample_weights,
                feature_weights,
                kernel,
            } => {
                let kernel = rows_to_array(&kernel, feature_weights.len())?;
                DiscreteMeasureHypernetwork::new(
                    Array1::from(sample_weights),
                    Array1::from(feature_weights),
                    kernel,
                )
            }
            doc @ NetworkDocument::Network { .. } => Ok(doc.into_network()?.to_hypernetwork()),
        }
    }
}

impl From<&DiscreteMeasureNetwork> for NetworkDocument {
    fn from(net: &DiscreteMeasureNetwork) -> Self {
        NetworkDocument::Network {
            weights: net.weights.to_vec(),
            kernel: array_to_rows(net.kernel.view()),
            points: net.points.as_ref().map(|p| array_to_rows(p.view())),
            label: net.label.clone(),
        }
    }
}

impl From<&DiscreteMeasureHypernetwork> for NetworkDocument {
    fn from(h: &DiscreteMeasureHypernetwork) -> Self {
        NetworkDocument::Hypernetwork {
            sample_weights: h.sample_weights.to_vec(),
            feature_weights: h.feature_weights.to_vec(),
            kernel: array_to_rows(h.kernel.view()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn one_point_network_is_valid() {
        let net = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]]).unwrap();
        assert_eq!(net.mass(), 1.0);
        assert_eq!(net.len(), 1);
    }

    #[test]
    fn negative_weight_reports_index() {
        let err = DiscreteMeasureNetwork::from_vecs(vec![0.5, -0.1], vec![vec![0.0; 2]; 2])
            .unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { index: 1, .. }));
    }

    #[test]
    fn rectangular_kernel_rejected() {
        let err = DiscreteMeasureNetwork::from_vecs(vec![1.0, 1.0], vec![vec![0.0; 3]; 2])
            .unwrap_err();
        assert!(matches!(err, Error::NonSquareKernel { expected: 2, rows: 2, cols: 3 }));
    }

    #[test]
    fn non_finite_kernel_rejected() {
        let err = DiscreteMeasureNetwork::new(array![1.0, 1.0], array![[0.0, f64::NAN], [0.0, 0.0]])
            .unwrap_err();
        assert_eq!(err, Error::NonFiniteEntry { row: 0, col: 1 });
    }

    #[test]
    fn scaling_examples() {
        let net = DiscreteMeasureNetwork::new(array![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(net.scale_measure(2.0).unwrap().weights(), &array![1.0, 1.0]);
        assert_eq!(net.scale_measure(1.0).unwrap(), net);
        let one = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]]).unwrap();
        let null = one.scale_measure(0.0).unwrap();
        assert_eq!(null.weights(), &array![0.0]);
        assert_eq!(null.mass(), 0.0);
        assert_eq!(net.scale_measure(-1.0).unwrap_err(), Error::NegativeScale(-1.0));
    }

    #[test]
    fn embedding_copies_weights_on_both_axes() {
        let net = DiscreteMeasureNetwork::new(
            array![0.2, 0.3, 0.5],
            array![[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]],
        )
        .unwrap();
        let h = net.to_hypernetwork();
        assert_eq!(h.n_samples(), 3);
        assert_eq!(h.n_features(), 3);
        assert_eq!(h.kernel(), net.kernel());
        assert_eq!(h.sample_mass(), net.mass());
        assert_eq!(h.feature_mass(), net.mass());
        let single = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]]).unwrap();
        let hs = single.to_hypernetwork();
        assert_eq!((hs.n_samples(), hs.n_features()), (1, 1));
    }

    #[test]
    fn tv_gap_examples() {
        assert_eq!(tv_gap(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(tv_gap(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!((tv_gap(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(tv_gap(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn json_field_names() {
        let net = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]])
            .unwrap()
            .with_label("a");
        let text = serde_json::to_string(&NetworkDocument::from(&net)).unwrap();
        assert_eq!(
            text,
            r#"{"type":"measure_network","weights":[1.0],"kernel":[[0.0]],"label":"a"}"#
        );
        let h = DiscreteMeasureHypernetwork::new(array![1.0], array![0.5, 0.5], array![[1.0, 2.0]])
            .unwrap();
        let text = serde_json::to_string(&NetworkDocument::from(&h)).unwrap();
        assert_eq!(
            text,
            r#"{"type":"measure_hypernetwork","sample_weights":[1.0],"feature_weights":[0.5,0.5],"kernel":[[1.0,2.0]]}"#
        );
        let back: NetworkDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_hypernetwork().unwrap(), h);
    }

    #[test]
    fn split_point_preserves_mass() {
        let net = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]]).unwrap();
        let split = net.split_point(0, 0.5).unwrap();
        assert_eq!(split.weights(), &array![0.5, 0.5]);
        assert_eq!(split.kernel(), &array![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn value_measure_coalesces() {
        let nu = DiscreteValueMeasure::from_atoms(vec![(1.0, 0.25), (0.0, 0.25), (1.0, 0.5)], 1e-12)
            .unwrap();
        assert_eq!(nu.values(), &[0.0, 1.0]);
        assert_eq!(nu.masses(), &[0.25, 0.75]);
    }

    fn weights_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn repeated_scaling_composes(w in weights_strategy(4), r in 0.0f64..5.0, s in 0.0f64..5.0) {
            let net = DiscreteMeasureNetwork::new(Array1::from(w), Array2::zeros((4, 4))).unwrap();
            let twice = net.scale_measure(r).unwrap().scale_measure(s).unwrap();
            let once = net.scale_measure(r * s).unwrap();
            for (a, b) in twice.weights().iter().zip(once.weights()) {
                // (w*r)*s and w*(r*s) differ by at most one rounding per product
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
            }
            prop_assert!((twice.mass() - twice.weights().sum()).abs() <= 1e-15 * twice.mass().max(1.0));
        }

        #[test]
        fn tv_gap_is_a_metric(a in weights_strategy(5), b in weights_strategy(5), c in weights_strategy(5)) {
            let ab = tv_gap(&a, &b).unwrap();
            prop_assert_eq!(ab, tv_gap(&b, &a).unwrap());
            prop_assert_eq!(tv_gap(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= tv_gap(&a, &c).unwrap() + tv_gap(&c, &b).unwrap() + 1e-12);
        }
    }
}
