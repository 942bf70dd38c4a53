//! Versioned JSON documents for systems, sample sets and reduced models.
//!
//! Matrices are `{"rows", "cols", "data"}` with `data` in row-major order.
//! Real matrices store plain numbers; a matrix with any nonzero imaginary
//! part stores every entry as `[re, im]`. Doubles are written with the
//! shortest representation that parses back to the same value.

use std::fs;
use std::path::Path;

use faer::Mat;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::loewner::{AssemblyMode, SampleSet};
use crate::models::{CoefficientEval, DampingSpec, SecondOrderSystem, TransferSample};
use crate::quadrature::{QuadratureRule, RuleSide};
use crate::reduction::{ReducedDamping, ReducedSecondOrderModel};

pub const FORMAT_VERSION: &str = "1.0";
pub const SYSTEM_FORMAT: &str = "soqbt-system";
pub const SAMPLES_FORMAT: &str = "soqbt-samples";
pub const ROM_FORMAT: &str = "soqbt-rom";

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(v) => c(v, 0.0),
            Entry::Complex([re, im]) => c(re, im),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Entry>,
}

impl MatrixJson {
    pub fn from_mat(a: &CMat) -> Self {
        let real = linalg::is_real(a.as_ref());
        let mut data = Vec::with_capacity(a.nrows() * a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                data.push(if real { Entry::Real(v.re) } else { Entry::Complex([v.re, v.im]) });
            }
        }
        MatrixJson {
            rows: a.nrows(),
            cols: a.ncols(),
            data,
        }
    }

    pub fn to_mat(&self, name: &str) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix {name}: {} entries for shape {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j].value()))
    }
}

fn cx(v: C64) -> [f64; 2] {
    [v.re, v.im]
}

fn from_cx(v: [f64; 2]) -> C64 {
    c(v[0], v[1])
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DampingJson {
    Rayleigh { alpha: f64, beta: f64 },
    Structural { eta: f64 },
}

impl DampingJson {
    pub fn from_spec(d: &DampingSpec) -> Result<Self> {
        match d {
            DampingSpec::Rayleigh { alpha, beta } => Ok(DampingJson::Rayleigh {
                alpha: *alpha,
                beta: *beta,
            }),
            DampingSpec::Structural { eta } => Ok(DampingJson::Structural { eta: *eta }),
            DampingSpec::Generalized(_) => Err(Error::Format("generalized damping cannot be serialized".into())),
        }
    }

    pub fn to_spec(&self) -> Result<DampingSpec> {
        match *self {
            DampingJson::Rayleigh { alpha, beta } => DampingSpec::rayleigh(alpha, beta),
            DampingJson::Structural { eta } => DampingSpec::structural(eta),
        }
    }
}

/// Common header of every document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: String,
}

fn check_header(value: &serde_json::Value, expected: &str) -> Result<()> {
    let header: Header = serde_json::from_value(value.clone())
        .map_err(|e| Error::Format(format!("missing format/version header: {e}")))?;
    if header.format != expected {
        return Err(Error::Format(format!("expected a {expected} document, found {}", header.format)));
    }
    let major = header.version.split('.').next().unwrap_or("");
    let ours = FORMAT_VERSION.split('.').next().unwrap_or("");
    if major != ours {
        return Err(Error::Format(format!(
            "unsupported {expected} version {} (reader supports {FORMAT_VERSION})",
            header.version
        )));
    }
    Ok(())
}

fn parse<T: DeserializeOwned>(text: &str, expected: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    check_header(&value, expected)?;
    serde_json::from_value(value).map_err(|e| Error::Format(format!("{expected}: {e}")))
}

fn render<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn check_finite(name: &str, a: &CMat) -> Result<()> {
    if (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)].is_finite())) {
        Ok(())
    } else {
        Err(Error::Format(format!("matrix {name} has non-finite entries")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SystemDoc {
    format: String,
    version: String,
    n: usize,
    m: usize,
    p: usize,
    damping: DampingJson,
    #[serde(rename = "M")]
    mass: MatrixJson,
    #[serde(rename = "K")]
    stiffness: MatrixJson,
    #[serde(rename = "Bu")]
    bu: MatrixJson,
    #[serde(rename = "Cp")]
    cp: MatrixJson,
    #[serde(rename = "Cv")]
    cv: MatrixJson,
}

pub fn system_to_string(sys: &SecondOrderSystem) -> Result<String> {
    for (name, a) in [("M", sys.m()), ("K", sys.k()), ("Bu", sys.bu()), ("Cp", sys.cp()), ("Cv", sys.cv())] {
        check_finite(name, a)?;
    }
    render(&SystemDoc {
        format: SYSTEM_FORMAT.into(),
        version: FORMAT_VERSION.into(),
        n: sys.n(),
        m: sys.inputs(),
        p: sys.outputs(),
        damping: DampingJson::from_spec(sys.damping())?,
        mass: MatrixJson::from_mat(sys.m()),
        stiffness: MatrixJson::from_mat(sys.k()),
        bu: MatrixJson::from_mat(sys.bu()),
        cp: MatrixJson::from_mat(sys.cp()),
        cv: MatrixJson::from_mat(sys.cv()),
    })
}

pub fn system_from_str(text: &str) -> Result<SecondOrderSystem> {
    let doc: SystemDoc = parse(text, SYSTEM_FORMAT)?;
    let sys = SecondOrderSystem::new(
        doc.mass.to_mat("M")?,
        doc.stiffness.to_mat("K")?,
        doc.damping.to_spec()?,
        doc.bu.to_mat("Bu")?,
        doc.cp.to_mat("Cp")?,
        doc.cv.to_mat("Cv")?,
    )
    .map_err(|e| match e {
        Error::DimensionMismatch(m) => Error::Format(m),
        other => other,
    })?;
    if (sys.n(), sys.inputs(), sys.outputs()) != (doc.n, doc.m, doc.p) {
        return Err(Error::Format(format!(
            "declared dimensions ({}, {}, {}) do not match the matrices ({}, {}, {})",
            doc.n,
            doc.m,
            doc.p,
            sys.n(),
            sys.inputs(),
            sys.outputs()
        )));
    }
    Ok(sys)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleJson {
    pub side: String,
    pub freqs: Vec<f64>,
    pub weights: Vec<f64>,
    pub pair_ordered: bool,
}

impl RuleJson {
    pub fn from_rule(r: &QuadratureRule) -> Self {
        RuleJson {
            side: r.side().as_str().into(),
            freqs: r.freqs().to_vec(),
            weights: r.weights().to_vec(),
            pair_ordered: r.is_pair_ordered(),
        }
    }

    pub fn to_rule(&self) -> Result<QuadratureRule> {
        let side = match self.side.as_str() {
            "left" => RuleSide::Left,
            "right" => RuleSide::Right,
            other => return Err(Error::Format(format!("unknown rule side {other:?}"))),
        };
        QuadratureRule::new(self.freqs.clone(), self.weights.clone(), side)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CoeffJson {
    f: [f64; 2],
    g: [f64; 2],
    n: [f64; 2],
    d: [f64; 2],
    h: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    n_prime: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    d_prime: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    h_prime: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleJson {
    freq: f64,
    #[serde(rename = "G")]
    g: MatrixJson,
    #[serde(rename = "Gp", skip_serializing_if = "Option::is_none", default)]
    gp: Option<MatrixJson>,
    #[serde(rename = "Gv", skip_serializing_if = "Option::is_none", default)]
    gv: Option<MatrixJson>,
    #[serde(rename = "dG", skip_serializing_if = "Option::is_none", default)]
    g_prime: Option<MatrixJson>,
    coeffs: CoeffJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SideJson {
    rule: RuleJson,
    samples: Vec<SampleJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SamplesDoc {
    format: String,
    version: String,
    mode: String,
    m: usize,
    p: usize,
    damping: DampingJson,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    left: Option<SideJson>,
    right: SideJson,
}

/// Samples for one assembly: left and right sets in general mode, a single
/// conjugate-pair set in Hermite mode.
#[derive(Debug, Clone)]
pub struct SampleFile {
    pub mode: AssemblyMode,
    pub damping: DampingSpec,
    pub left: Option<SampleSet>,
    pub right: SampleSet,
}

impl SampleFile {
    /// Every `(s_k, G(s_k))` pair in the file.
    pub fn all_samples(&self) -> Vec<(C64, CMat)> {
        self.left
            .iter()
            .chain(std::iter::once(&self.right))
            .flat_map(|set| set.samples.iter().map(|s| (s.node, s.g.clone())))
            .collect()
    }
}

fn side_to_json(set: &SampleSet) -> Result<SideJson> {
    let mat = |name: &str, a: &CMat| -> Result<MatrixJson> {
        check_finite(name, a)?;
        Ok(MatrixJson::from_mat(a))
    };
    let samples = set
        .samples
        .iter()
        .zip(&set.coeffs)
        .zip(set.rule.freqs())
        .map(|((s, co), &freq)| {
            Ok(SampleJson {
                freq,
                g: mat("G", &s.g)?,
                gp: s.gp.as_ref().map(|a| mat("Gp", a)).transpose()?,
                gv: s.gv.as_ref().map(|a| mat("Gv", a)).transpose()?,
                g_prime: s.g_prime.as_ref().map(|a| mat("dG", a)).transpose()?,
                coeffs: CoeffJson {
                    f: cx(co.f),
                    g: cx(co.g),
                    n: cx(co.n),
                    d: cx(co.d),
                    h: cx(co.h),
                    n_prime: co.n_prime.map(cx),
                    d_prime: co.d_prime.map(cx),
                    h_prime: co.h_prime.map(cx),
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(SideJson {
        rule: RuleJson::from_rule(&set.rule),
        samples,
    })
}

fn side_from_json(side: &SideJson) -> Result<SampleSet> {
    let rule = side.rule.to_rule()?;
    if side.samples.len() != rule.len() {
        return Err(Error::Format(format!(
            "{} samples for a rule with {} nodes",
            side.samples.len(),
            rule.len()
        )));
    }
    let mut samples = Vec::with_capacity(rule.len());
    let mut coeffs = Vec::with_capacity(rule.len());
    for (j, s) in side.samples.iter().enumerate() {
        if s.freq != rule.freqs()[j] {
            return Err(Error::Format(format!("sample {j} frequency {} differs from its rule node", s.freq)));
        }
        let node = rule.node(j);
        let opt = |m: &Option<MatrixJson>, name: &str| m.as_ref().map(|m| m.to_mat(name)).transpose();
        samples.push(TransferSample {
            node,
            g: s.g.to_mat("G")?,
            gp: opt(&s.gp, "Gp")?,
            gv: opt(&s.gv, "Gv")?,
            g_prime: opt(&s.g_prime, "dG")?,
        });
        let co = &s.coeffs;
        coeffs.push(CoefficientEval {
            s: node,
            f: from_cx(co.f),
            g: from_cx(co.g),
            n: from_cx(co.n),
            d: from_cx(co.d),
            h: from_cx(co.h),
            n_prime: co.n_prime.map(from_cx),
            d_prime: co.d_prime.map(from_cx),
            h_prime: co.h_prime.map(from_cx),
        });
    }
    SampleSet::from_parts(rule, samples, coeffs).map_err(|e| Error::Format(e.to_string()))
}

pub fn samples_to_string(file: &SampleFile) -> Result<String> {
    render(&SamplesDoc {
        format: SAMPLES_FORMAT.into(),
        version: FORMAT_VERSION.into(),
        mode: file.mode.as_str().into(),
        m: file.right.inputs(),
        p: file.right.outputs(),
        damping: DampingJson::from_spec(&file.damping)?,
        left: file.left.as_ref().map(side_to_json).transpose()?,
        right: side_to_json(&file.right)?,
    })
}

pub fn samples_from_str(text: &str) -> Result<SampleFile> {
    let doc: SamplesDoc = parse(text, SAMPLES_FORMAT)?;
    let mode = match doc.mode.as_str() {
        "general" => AssemblyMode::General,
        "hermite" => AssemblyMode::Hermite,
        other => return Err(Error::Format(format!("unknown sample mode {other:?}"))),
    };
    let right = side_from_json(&doc.right)?;
    let left = doc.left.as_ref().map(side_from_json).transpose()?;
    if mode == AssemblyMode::General && left.is_none() {
        return Err(Error::Format("general sample sets need left samples".into()));
    }
    for set in left.iter().chain(std::iter::once(&right)) {
        if (set.outputs(), set.inputs()) != (doc.p, doc.m) {
            return Err(Error::Format(format!("samples are not {}x{}", doc.p, doc.m)));
        }
    }
    Ok(SampleFile {
        mode,
        damping: doc.damping.to_spec()?,
        left,
        right,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RomDampingJson {
    Rayleigh {
        alpha: f64,
        beta: f64,
    },
    Structural {
        eta: f64,
    },
    Matrix {
        #[serde(rename = "D")]
        d: MatrixJson,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RomDoc {
    format: String,
    version: String,
    r: usize,
    m: usize,
    p: usize,
    damping: RomDampingJson,
    #[serde(rename = "K")]
    stiffness: MatrixJson,
    #[serde(rename = "Bu")]
    bu: MatrixJson,
    #[serde(rename = "Cp")]
    cp: MatrixJson,
    #[serde(rename = "Cv")]
    cv: MatrixJson,
}

pub fn rom_to_string(rom: &ReducedSecondOrderModel) -> Result<String> {
    for (name, a) in [("K", rom.kt()), ("Bu", rom.bt()), ("Cp", rom.cpt()), ("Cv", rom.cvt())] {
        check_finite(name, a)?;
    }
    let damping = match rom.damping() {
        ReducedDamping::Proportional(spec) => match DampingJson::from_spec(spec)? {
            DampingJson::Rayleigh { alpha, beta } => RomDampingJson::Rayleigh { alpha, beta },
            DampingJson::Structural { eta } => RomDampingJson::Structural { eta },
        },
        ReducedDamping::Explicit(d) => {
            check_finite("D", d)?;
            RomDampingJson::Matrix {
                d: MatrixJson::from_mat(d),
            }
        }
    };
    render(&RomDoc {
        format: ROM_FORMAT.into(),
        version: FORMAT_VERSION.into(),
        r: rom.order(),
        m: rom.inputs(),
        p: rom.outputs(),
        damping,
        stiffness: MatrixJson::from_mat(rom.kt()),
        bu: MatrixJson::from_mat(rom.bt()),
        cp: MatrixJson::from_mat(rom.cpt()),
        cv: MatrixJson::from_mat(rom.cvt()),
    })
}

pub fn rom_from_str(text: &str) -> Result<ReducedSecondOrderModel> {
    let doc: RomDoc = parse(text, ROM_FORMAT)?;
    let damping = match &doc.damping {
        RomDampingJson::Rayleigh { alpha, beta } => ReducedDamping::Proportional(DampingSpec::rayleigh(*alpha, *beta)?),
        RomDampingJson::Structural { eta } => ReducedDamping::Proportional(DampingSpec::structural(*eta)?),
        RomDampingJson::Matrix { d } => ReducedDamping::Explicit(d.to_mat("D")?),
    };
    let rom = ReducedSecondOrderModel::new(
        doc.stiffness.to_mat("K")?,
        damping,
        doc.bu.to_mat("Bu")?,
        doc.cp.to_mat("Cp")?,
        doc.cv.to_mat("Cv")?,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    if (rom.order(), rom.inputs(), rom.outputs()) != (doc.r, doc.m, doc.p) {
        return Err(Error::Format("declared dimensions do not match the matrices".into()));
    }
    Ok(rom)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::Io)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::Io)
}

/// Shortest round-trip decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes preformatted cells as CSV with a header line.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Formats a row of doubles with [`fmt_f64`].
pub fn csv_row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| fmt_f64(*v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate_msd_chain, generate_random_spd_system, generate_structural_chain, MsdParams, RandomSpdOptions};
    use crate::quadrature::{exp_trapezoid, interleave};
    use crate::reduction::soquadpvbt;

    fn same(a: &CMat, b: &CMat) -> bool {
        a.nrows() == b.nrows()
            && a.ncols() == b.ncols()
            && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)] == b[(i, j)]))
    }

    #[test]
    fn system_round_trip_is_bit_exact() {
        let sys = generate_random_spd_system(5, 2, 3, 17, &RandomSpdOptions::default()).unwrap();
        let text = system_to_string(&sys).unwrap();
        let back = system_from_str(&text).unwrap();
        for (a, b) in [(sys.m(), back.m()), (sys.k(), back.k()), (sys.bu(), back.bu()), (sys.cp(), back.cp()), (sys.cv(), back.cv())] {
            assert!(same(a, b));
        }
        assert_eq!(sys.damping(), back.damping());
        assert_eq!(system_to_string(&back).unwrap(), text);
    }

    #[test]
    fn structural_chain_document() {
        let sys = generate_structural_chain(2, 1e-3).unwrap();
        let text = system_to_string(&sys).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["K"]["data"], serde_json::json!([2.0, -1.0, -1.0, 2.0]));
        assert_eq!(v["damping"], serde_json::json!({"type": "structural", "eta": 0.001}));
        assert_eq!(v["version"], "1.0");
    }

    #[test]
    fn complex_entries_use_pairs() {
        let a = Mat::from_fn(1, 2, |_, j| c(j as f64, 0.5));
        let j = serde_json::to_value(MatrixJson::from_mat(&a)).unwrap();
        assert_eq!(j["data"], serde_json::json!([[0.0, 0.5], [1.0, 0.5]]));
    }

    #[test]
    fn rejects_unknown_major_version() {
        let sys = generate_msd_chain(1, &MsdParams::default()).unwrap();
        let text = system_to_string(&sys).unwrap().replace("\"1.0\"", "\"2.0\"");
        assert!(matches!(system_from_str(&text), Err(Error::Format(_))));
        let text = system_to_string(&sys).unwrap().replace("\"1.0\"", "\"1.3\"");
        assert!(system_from_str(&text).is_ok());
    }

    #[test]
    fn rejects_wrong_document_kind_and_shape() {
        let sys = generate_msd_chain(1, &MsdParams::default()).unwrap();
        let text = system_to_string(&sys).unwrap();
        assert!(matches!(rom_from_str(&text), Err(Error::Format(_))));
        let bad = text.replacen("\"n\": 4", "\"n\": 5", 1);
        assert!(matches!(system_from_str(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn sample_file_round_trip() {
        let sys = generate_random_spd_system(4, 1, 2, 3, &RandomSpdOptions::default()).unwrap();
        let (l, r) = interleave(0.1, 10.0, 4).unwrap();
        let file = SampleFile {
            mode: AssemblyMode::General,
            damping: sys.damping().clone(),
            left: Some(SampleSet::from_system(&sys, &l, false, false).unwrap()),
            right: SampleSet::from_system(&sys, &r, true, true).unwrap(),
        };
        let text = samples_to_string(&file).unwrap();
        let back = samples_from_str(&text).unwrap();
        assert_eq!(samples_to_string(&back).unwrap(), text);
        assert!(back.right.has_derivatives);
        assert_eq!(back.all_samples().len(), 8);
        let hermite = SampleFile {
            mode: AssemblyMode::Hermite,
            damping: sys.damping().clone(),
            left: None,
            right: SampleSet::from_system(&sys, &exp_trapezoid(0.1, 10.0, 4, RuleSide::Right).unwrap(), false, true).unwrap(),
        };
        let text = samples_to_string(&hermite).unwrap();
        assert_eq!(samples_from_str(&text).unwrap().mode, AssemblyMode::Hermite);
    }

    #[test]
    fn rom_round_trip() {
        let sys = generate_random_spd_system(6, 1, 1, 3, &RandomSpdOptions::default()).unwrap();
        let (l, r) = interleave(0.1, 10.0, 6).unwrap();
        let ls = SampleSet::from_system(&sys, &l, false, false).unwrap();
        let rs = SampleSet::from_system(&sys, &r, true, false).unwrap();
        let ds = crate::loewner::assemble_general(&ls, &rs, sys.damping()).unwrap();
        let (rom, _) = soquadpvbt(&ds, 3).unwrap();
        let text = rom_to_string(&rom).unwrap();
        assert_eq!(rom_from_str(&text).unwrap(), rom);
        let explicit = rom.with_damping(ReducedDamping::Explicit(linalg::identity(3))).unwrap();
        assert_eq!(rom_from_str(&rom_to_string(&explicit).unwrap()).unwrap(), explicit);
    }

    #[test]
    fn csv_uses_round_trip_decimals() {
        let s = csv_string(&["a", "b"], &[csv_row(&[0.1, 1.0 / 3.0])]);
        assert_eq!(s, "a,b\n0.1,0.3333333333333333\n");
    }
}
