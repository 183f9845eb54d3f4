use std::path::Path;

use super::{ModelError, RelateParams};
use crate::math::Matrix;

/// Writes one CSV row per entity: name, the `d/2` phase values, then the
/// `d/2` modulus values, each with 17 significant digits.
pub fn export_embeddings(params: &RelateParams, names: &[String], path: &Path) -> Result<(), ModelError> {
    let k = params.half_dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_owned()];
    header.extend((0..k).map(|i| format!("phase_{i}")));
    header.extend((0..k).map(|i| format!("modulus_{i}")));
    let csv_err = |e: csv::Error| ModelError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(&header).map_err(csv_err)?;
    for (e, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(params.entity_phase.row(e).iter().map(|x| format!("{x:.16e}")));
        rec.extend(params.entity_modulus.row(e).iter().map(|x| format!("{x:.16e}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ModelError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    crate::io::write_atomic(path, &bytes).map_err(|e| ModelError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedEmbeddings {
    pub names: Vec<String>,
    pub phase: Matrix,
    pub modulus: Matrix,
}

pub fn import_embeddings(path: &Path) -> Result<ImportedEmbeddings, ModelError> {
    let format_err = |message: String| ModelError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
    let width = r.headers().map_err(|e| format_err(e.to_string()))?.len();
    if width < 1 || (width - 1) % 2 != 0 {
        return Err(format_err(format!("unexpected column count {width}")));
    }
    let k = (width - 1) / 2;
    let mut names = Vec::new();
    let mut phase = Vec::new();
    let mut modulus = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        names.push(rec[0].to_owned());
        for (i, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(format!("bad number '{field}'")))?;
            if i < k {
                phase.push(v);
            } else {
                modulus.push(v);
            }
        }
    }
    let n = names.len();
    Ok(ImportedEmbeddings {
        names,
        phase: Matrix::from_vec(n, k, phase),
        modulus: Matrix::from_vec(n, k, modulus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RelateHyper;

    #[test]
    fn export_round_trip_is_bitwise() {
        let p = RelateParams::init(3, 2, 4, &RelateHyper::default(), 5).unwrap();
        let names: Vec<String> = vec!["a".into(), "b,with comma".into(), "c".into()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        export_embeddings(&p, &names, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 5);
        let back = import_embeddings(&path).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.phase, p.entity_phase);
        assert_eq!(back.modulus, p.entity_modulus);
    }

    #[test]
    fn export_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = (0..5).map(|i| format!("e{i}")).collect();
        let mut files = Vec::new();
        for i in 0..2 {
            let p = RelateParams::init(5, 2, 8, &RelateHyper::default(), 77).unwrap();
            let path = dir.path().join(format!("e{i}.csv"));
            export_embeddings(&p, &names, &path).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(files[0], files[1]);
    }
}
