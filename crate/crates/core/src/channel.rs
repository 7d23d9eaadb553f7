//! Three-receiver broadcast channels `p(y1,y2,y3|x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{compose_channels, ProbError, StochasticMatrix, PMF_TOL, ZERO_MASS};

/// Row-sum tolerance applied to channel files.
pub const FILE_ROW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("channel structure: {0}")]
    Structure(String),
}

fn field_err(field: &str, msg: impl Into<String>) -> ChannelError {
    ChannelError::Field { field: field.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureTag {
    General,
    Multilevel,
    ProductMultilevel,
    Deterministic,
}

/// Branch laws of the product channel
/// `X1 -> Y21 -> Y11 -> Y31`, `X2 -> Y12 -> Y32`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductChannelSpec {
    pub x1_to_y21: StochasticMatrix,
    pub y21_to_y11: StochasticMatrix,
    pub y11_to_y31: StochasticMatrix,
    pub x2_to_y12: StochasticMatrix,
    pub y12_to_y32: StochasticMatrix,
}

impl ProductChannelSpec {
    fn check(&self) -> Result<(), ChannelError> {
        let links = [
            ("x1_to_y21 -> y21_to_y11", &self.x1_to_y21, &self.y21_to_y11),
            ("y21_to_y11 -> y11_to_y31", &self.y21_to_y11, &self.y11_to_y31),
            ("x2_to_y12 -> y12_to_y32", &self.x2_to_y12, &self.y12_to_y32),
        ];
        for (name, a, b) in links {
            if a.cols() != b.rows() {
                return Err(ChannelError::Prob(ProbError::Dimension(format!(
                    "{name}: {} outputs feed {} inputs",
                    a.cols(),
                    b.rows()
                ))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BroadcastChannel3 {
    input_size: usize,
    output_sizes: [usize; 3],
    /// Row-major over `(x, y1, y2, y3)`.
    law: Vec<f64>,
    structure: StructureTag,
    /// `p(y3|y1)` when the law factors through Y1.
    degrading: Option<StochasticMatrix>,
}

impl BroadcastChannel3 {
    /// General law; multilevel and deterministic structure are detected.
    pub fn from_law(
        input_size: usize,
        output_sizes: [usize; 3],
        law: Vec<f64>,
    ) -> Result<Self, ChannelError> {
        let out: usize = output_sizes.iter().product();
        if input_size == 0 || out == 0 {
            return Err(ChannelError::Prob(ProbError::Dimension("empty alphabet".into())));
        }
        let m = StochasticMatrix::new(input_size, out, law)?;
        let mut ch = Self {
            input_size,
            output_sizes,
            law: m.entries().to_vec(),
            structure: StructureTag::General,
            degrading: None,
        };
        if let Some(d) = ch.detect_degrading() {
            ch.degrading = Some(d);
            ch.structure = StructureTag::Multilevel;
        } else if m.is_deterministic() {
            ch.structure = StructureTag::Deterministic;
        }
        Ok(ch)
    }

    pub fn build_multilevel(
        py1y2_given_x: &StochasticMatrix,
        y1_size: usize,
        py3_given_y1: &StochasticMatrix,
    ) -> Result<Self, ChannelError> {
        if y1_size == 0 || py1y2_given_x.cols() % y1_size != 0 {
            return Err(ChannelError::Prob(ProbError::Dimension(format!(
                "{} joint outputs do not split into |Y1| = {y1_size}",
                py1y2_given_x.cols()
            ))));
        }
        if py3_given_y1.rows() != y1_size {
            return Err(ChannelError::Prob(ProbError::Dimension(format!(
                "p(y3|y1) has {} rows, |Y1| = {y1_size}",
                py3_given_y1.rows()
            ))));
        }
        let y2_size = py1y2_given_x.cols() / y1_size;
        let y3_size = py3_given_y1.cols();
        let nx = py1y2_given_x.rows();
        let mut law = Vec::with_capacity(nx * y1_size * y2_size * y3_size);
        for x in 0..nx {
            for y1 in 0..y1_size {
                for y2 in 0..y2_size {
                    let p12 = py1y2_given_x.get(x, y1 * y2_size + y2);
                    law.extend(py3_given_y1.row(y1).iter().map(|w| p12 * w));
                }
            }
        }
        let m = StochasticMatrix::new(nx, law.len() / nx, law)?;
        Ok(Self {
            input_size: nx,
            output_sizes: [y1_size, y2_size, y3_size],
            law: m.entries().to_vec(),
            structure: StructureTag::Multilevel,
            degrading: Some(py3_given_y1.clone()),
        })
    }

    /// Product channel with `Y1 = (Y11, Y12)`, `Y2 = Y21`, `Y3 = (Y31, Y32)`
    /// and input `X = (X1, X2)`; pairs are indexed first-major.
    pub fn build_product(spec: &ProductChannelSpec) -> Result<Self, ChannelError> {
        spec.check()?;
        let (n1, n2) = (spec.x1_to_y21.rows(), spec.x2_to_y12.rows());
        let n21 = spec.x1_to_y21.cols();
        let n11 = spec.y21_to_y11.cols();
        let n31 = spec.y11_to_y31.cols();
        let n12 = spec.x2_to_y12.cols();
        let n32 = spec.y12_to_y32.cols();
        let sizes = [n11 * n12, n21, n31 * n32];
        let out = sizes[0] * sizes[1] * sizes[2];
        let mut law = vec![0.0; n1 * n2 * out];
        for x1 in 0..n1 {
            for x2 in 0..n2 {
                let x = x1 * n2 + x2;
                for y21 in 0..n21 {
                    let a = spec.x1_to_y21.get(x1, y21);
                    if a == 0.0 {
                        continue;
                    }
                    for y11 in 0..n11 {
                        let b = a * spec.y21_to_y11.get(y21, y11);
                        if b == 0.0 {
                            continue;
                        }
                        for y31 in 0..n31 {
                            let c = b * spec.y11_to_y31.get(y11, y31);
                            if c == 0.0 {
                                continue;
                            }
                            for y12 in 0..n12 {
                                let d = c * spec.x2_to_y12.get(x2, y12);
                                if d == 0.0 {
                                    continue;
                                }
                                for y32 in 0..n32 {
                                    let e = d * spec.y12_to_y32.get(y12, y32);
                                    let y1 = y11 * n12 + y12;
                                    let y3 = y31 * n32 + y32;
                                    law[x * out + (y1 * sizes[1] + y21) * sizes[2] + y3] += e;
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut degrading = vec![0.0; sizes[0] * sizes[2]];
        for y11 in 0..n11 {
            for y12 in 0..n12 {
                for y31 in 0..n31 {
                    for y32 in 0..n32 {
                        degrading[(y11 * n12 + y12) * sizes[2] + y31 * n32 + y32] =
                            spec.y11_to_y31.get(y11, y31) * spec.y12_to_y32.get(y12, y32);
                    }
                }
            }
        }
        let m = StochasticMatrix::new(n1 * n2, out, law)?;
        Ok(Self {
            input_size: n1 * n2,
            output_sizes: sizes,
            law: m.entries().to_vec(),
            structure: StructureTag::ProductMultilevel,
            degrading: Some(StochasticMatrix::new(sizes[0], sizes[2], degrading)?),
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_sizes(&self) -> [usize; 3] {
        self.output_sizes
    }

    pub fn structure(&self) -> StructureTag {
        self.structure
    }

    pub fn law(&self) -> &[f64] {
        &self.law
    }

    fn out_len(&self) -> usize {
        self.output_sizes.iter().product()
    }

    /// `p(y1, y2, y3 | x)` flattened over the outputs.
    pub fn row(&self, x: usize) -> &[f64] {
        let out = self.out_len();
        &self.law[x * out..(x + 1) * out]
    }

    pub fn prob(&self, x: usize, y: [usize; 3]) -> f64 {
        let [_, n2, n3] = self.output_sizes;
        self.row(x)[(y[0] * n2 + y[1]) * n3 + y[2]]
    }

    pub fn is_multilevel(&self) -> bool {
        self.degrading.is_some()
    }

    pub fn is_deterministic(&self) -> bool {
        self.law
            .iter()
            .all(|&p| p <= ZERO_MASS || (1.0 - p).abs() <= ZERO_MASS)
    }

    pub fn degrading(&self) -> Option<&StochasticMatrix> {
        self.degrading.as_ref()
    }

    /// `p(y_k | x)` for receiver `k` in 1..=3.
    pub fn receiver(&self, k: usize) -> StochasticMatrix {
        assert!((1..=3).contains(&k), "receivers are numbered 1..=3");
        let [_, n2, n3] = self.output_sizes;
        let cols = self.output_sizes[k - 1];
        let mut entries = vec![0.0; self.input_size * cols];
        for x in 0..self.input_size {
            for (i, &p) in self.row(x).iter().enumerate() {
                let (y1, y2, y3) = (i / (n2 * n3), (i / n3) % n2, i % n3);
                let y = [y1, y2, y3][k - 1];
                entries[x * cols + y] += p;
            }
        }
        StochasticMatrix::new(self.input_size, cols, entries).expect("marginal of a valid law")
    }

    /// `p(y1, y2 | x)` with `y1` major.
    pub fn y1y2_channel(&self) -> StochasticMatrix {
        let [n1, n2, n3] = self.output_sizes;
        let mut entries = vec![0.0; self.input_size * n1 * n2];
        for x in 0..self.input_size {
            for (i, &p) in self.row(x).iter().enumerate() {
                entries[x * n1 * n2 + i / n3] += p;
            }
        }
        StochasticMatrix::new(self.input_size, n1 * n2, entries).expect("marginal of a valid law")
    }

    /// Recovers `p(y3|y1)` when the law factors as `p(y1,y2|x) p(y3|y1)`.
    fn detect_degrading(&self) -> Option<StochasticMatrix> {
        let [n1, n2, n3] = self.output_sizes;
        let mut num = vec![0.0; n1 * n3];
        let mut den = vec![0.0; n1];
        for x in 0..self.input_size {
            for (i, &p) in self.row(x).iter().enumerate() {
                let (y1, y3) = (i / (n2 * n3), i % n3);
                num[y1 * n3 + y3] += p;
                den[y1] += p;
            }
        }
        let mut entries = vec![0.0; n1 * n3];
        for y1 in 0..n1 {
            for y3 in 0..n3 {
                entries[y1 * n3 + y3] = if den[y1] > ZERO_MASS {
                    num[y1 * n3 + y3] / den[y1]
                } else if y3 == 0 {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let d = StochasticMatrix::new(n1, n3, entries).ok()?;
        let p12 = self.y1y2_channel();
        for x in 0..self.input_size {
            for (i, &p) in self.row(x).iter().enumerate() {
                let (y12, y1, y3) = (i / n3, i / (n2 * n3), i % n3);
                if (p - p12.get(x, y12) * d.get(y1, y3)).abs() > PMF_TOL {
                    return None;
                }
            }
        }
        Some(d)
    }

    /// Checks the declared `p(y3|y1)` factor against the full law.
    pub fn check_multilevel_factorisation(&self) -> Result<(), ChannelError> {
        let d = self
            .degrading
            .as_ref()
            .ok_or_else(|| ChannelError::Structure("channel is not multilevel".into()))?;
        let [_, n2, n3] = self.output_sizes;
        let p12 = self.y1y2_channel();
        for x in 0..self.input_size {
            for (i, &p) in self.row(x).iter().enumerate() {
                let (y12, y1, y3) = (i / n3, i / (n2 * n3), i % n3);
                let q = p12.get(x, y12) * d.get(y1, y3);
                if (p - q).abs() > PMF_TOL {
                    return Err(ChannelError::Structure(format!(
                        "law does not factor through Y1 at x={x}, cell {i}: {p} vs {q}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ChannelError> {
        let file: ChannelFile =
            serde_json::from_str(text).map_err(|e| field_err("<document>", e.to_string()))?;
        file.build()
    }

    pub fn to_json_file(&self) -> ChannelFile {
        let out = self.out_len();
        ChannelFile {
            input_size: self.input_size,
            outputs: self.output_sizes.to_vec(),
            law: Some(self.law.chunks(out).map(<[f64]>::to_vec).collect()),
            multilevel: None,
            product: None,
        }
    }
}

/// The erasure example channel: `Y21 = X1`, `Y21 -> Y11` and `Y12 -> Y32`
/// are BEC(1/2), `Y12 = X2`, and `Y11 -> Y31` keeps erasures and erases a
/// bit with probability 2/3. Letters are ordered `0, E, 1`.
pub fn make_bec_example() -> BroadcastChannel3 {
    let spec = bec_example_spec();
    BroadcastChannel3::build_product(&spec).expect("fixed, valid construction")
}

pub fn bec_example_spec() -> ProductChannelSpec {
    ProductChannelSpec {
        x1_to_y21: StochasticMatrix::identity(2),
        y21_to_y11: StochasticMatrix::bec(0.5).expect("valid"),
        y11_to_y31: StochasticMatrix::erasure_lift(2.0 / 3.0).expect("valid"),
        x2_to_y12: StochasticMatrix::identity(2),
        y12_to_y32: StochasticMatrix::bec(0.5).expect("valid"),
    }
}

/// Overall `X1 -> Y31` law of the erasure example's first branch.
pub fn bec_example_x1_to_y31() -> StochasticMatrix {
    let s = bec_example_spec();
    let a = compose_channels(&s.x1_to_y21, &s.y21_to_y11).expect("valid");
    compose_channels(&a, &s.y11_to_y31).expect("valid")
}

/// On-disk channel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub input_size: usize,
    pub outputs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multilevel: Option<MultilevelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultilevelFile {
    pub py1y2_given_x: Vec<Vec<f64>>,
    pub py3_given_y1: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductFile {
    pub x1_to_y21: Vec<Vec<f64>>,
    pub y21_to_y11: Vec<Vec<f64>>,
    pub y11_to_y31: Vec<Vec<f64>>,
    pub x2_to_y12: Vec<Vec<f64>>,
    pub y12_to_y32: Vec<Vec<f64>>,
}

/// Validates rows at the file tolerance and renormalises them.
fn load_matrix(field: &str, rows: &[Vec<f64>]) -> Result<StochasticMatrix, ChannelError> {
    if rows.is_empty() {
        return Err(field_err(field, "no rows"));
    }
    let cols = rows[0].len();
    let mut entries = Vec::with_capacity(rows.len() * cols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(field_err(field, format!("row {r} has {} entries, expected {cols}", row.len())));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(field_err(field, format!("row {r} has a negative or non-finite entry")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > FILE_ROW_TOL {
            return Err(field_err(field, format!("row {r} sums to {total}")));
        }
        entries.extend(row.iter().map(|p| p / total));
    }
    StochasticMatrix::new(rows.len(), cols, entries).map_err(|e| field_err(field, e.to_string()))
}

impl ChannelFile {
    pub fn build(&self) -> Result<BroadcastChannel3, ChannelError> {
        if self.outputs.len() != 3 {
            return Err(field_err("outputs", format!("expected 3 sizes, got {}", self.outputs.len())));
        }
        let sizes = [self.outputs[0], self.outputs[1], self.outputs[2]];
        let forms = [self.law.is_some(), self.multilevel.is_some(), self.product.is_some()];
        if forms.iter().filter(|&&f| f).count() != 1 {
            return Err(field_err(
                "law|multilevel|product",
                "exactly one of `law`, `multilevel`, `product` must be given",
            ));
        }
        let ch = if let Some(law) = &self.law {
            let m = load_matrix("law", law)?;
            if m.rows() != self.input_size {
                return Err(field_err("law", format!("{} rows, input_size is {}", m.rows(), self.input_size)));
            }
            if m.cols() != sizes.iter().product::<usize>() {
                return Err(field_err("law", format!("{} columns do not match outputs {sizes:?}", m.cols())));
            }
            BroadcastChannel3::from_law(self.input_size, sizes, m.entries().to_vec())?
        } else if let Some(ml) = &self.multilevel {
            let p12 = load_matrix("multilevel.py1y2_given_x", &ml.py1y2_given_x)?;
            let p3 = load_matrix("multilevel.py3_given_y1", &ml.py3_given_y1)?;
            BroadcastChannel3::build_multilevel(&p12, sizes[0], &p3)
                .map_err(|e| field_err("multilevel", e.to_string()))?
        } else {
            let pf = self.product.as_ref().expect("checked above");
            let spec = ProductChannelSpec {
                x1_to_y21: load_matrix("product.x1_to_y21", &pf.x1_to_y21)?,
                y21_to_y11: load_matrix("product.y21_to_y11", &pf.y21_to_y11)?,
                y11_to_y31: load_matrix("product.y11_to_y31", &pf.y11_to_y31)?,
                x2_to_y12: load_matrix("product.x2_to_y12", &pf.x2_to_y12)?,
                y12_to_y32: load_matrix("product.y12_to_y32", &pf.y12_to_y32)?,
            };
            BroadcastChannel3::build_product(&spec).map_err(|e| field_err("product", e.to_string()))?
        };
        if ch.input_size() != self.input_size {
            return Err(field_err(
                "input_size",
                format!("declared {}, structure implies {}", self.input_size, ch.input_size()),
            ));
        }
        if ch.output_sizes() != sizes {
            return Err(field_err(
                "outputs",
                format!("declared {sizes:?}, structure implies {:?}", ch.output_sizes()),
            ));
        }
        Ok(ch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{mutual_information, FinitePmf, JointPmf};

    #[test]
    fn bec_example_shape_and_erasure() {
        let ch = make_bec_example();
        assert_eq!(ch.input_size(), 4);
        assert_eq!(ch.output_sizes(), [6, 2, 9]);
        assert_eq!(ch.structure(), StructureTag::ProductMultilevel);
        for x in 0..4 {
            assert!((ch.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let x1_y31 = bec_example_x1_to_y31();
        assert!((x1_y31.get(0, 1) - 5.0 / 6.0).abs() < 1e-12);
        assert!((x1_y31.get(1, 1) - 5.0 / 6.0).abs() < 1e-12);
        ch.check_multilevel_factorisation().unwrap();
    }

    #[test]
    fn product_branch_mi_is_one_sixth() {
        let j = JointPmf::from_input_and_channel(&FinitePmf::uniform(2), &bec_example_x1_to_y31())
            .unwrap();
        assert!((mutual_information(&j).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn multilevel_with_identity_degrading_copies_y1() {
        let p12 = StochasticMatrix::from_rows(&[vec![0.7, 0.1, 0.1, 0.1], vec![0.2, 0.2, 0.1, 0.5]])
            .unwrap();
        let ch = BroadcastChannel3::build_multilevel(&p12, 2, &StochasticMatrix::identity(2)).unwrap();
        assert_eq!(ch.receiver(1), ch.receiver(3));
        assert!(BroadcastChannel3::build_multilevel(&p12, 3, &StochasticMatrix::identity(3)).is_err());
    }

    #[test]
    fn noiseless_product_is_deterministic() {
        let id = StochasticMatrix::identity(2);
        let spec = ProductChannelSpec {
            x1_to_y21: id.clone(),
            y21_to_y11: id.clone(),
            y11_to_y31: id.clone(),
            x2_to_y12: id.clone(),
            y12_to_y32: id,
        };
        let ch = BroadcastChannel3::build_product(&spec).unwrap();
        assert!(ch.is_deterministic());
        let j = JointPmf::from_input_and_channel(&FinitePmf::uniform(4), &ch.receiver(1)).unwrap();
        assert!((j.entropy_of(&[1]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn law_form_detects_multilevel() {
        let ch = make_bec_example();
        let text = serde_json::to_string(&ch.to_json_file()).unwrap();
        let back = BroadcastChannel3::from_json_str(&text).unwrap();
        assert_eq!(back.structure(), StructureTag::Multilevel);
        for (a, b) in back.law().iter().zip(ch.law()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn json_errors_name_the_field() {
        let bad = r#"{"input_size": 2, "outputs": [2,2,2], "law": [[0.5,0.5,0,0,0,0,0,0],[0.3,0,0,0,0,0,0,0]]}"#;
        let err = BroadcastChannel3::from_json_str(bad).unwrap_err().to_string();
        assert!(err.contains("law") && err.contains("row 1"), "{err}");
        let two = r#"{"input_size": 2, "outputs": [2,2], "law": [[1]]}"#;
        assert!(BroadcastChannel3::from_json_str(two).unwrap_err().to_string().contains("outputs"));
        assert!(BroadcastChannel3::from_json_str("{").is_err());
    }
}
