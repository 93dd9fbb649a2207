//! On-disk formats.
//!
//! Every dense tensor is a flat little-endian binary next to a JSON sidecar
//! describing it:
//!
//! - `<name>.bin` - raw values, row-major
//! - `<name>.json` - `{"shape": [..], "dtype": "f32"}` (or `"u32"` for
//!   index data)
//!
//! Sparse matrices use `"dtype": "coo"` with an `nnz` field; the binary
//! holds `nnz` records of `(u32 row, u32 col, f32 value)`. Weight bundles
//! are one JSON manifest listing tensor names and shapes plus one binary
//! holding the concatenated f32 values in manifest order. Mesh assets are a
//! JSON manifest pointing at a template tensor, a faces tensor and a sparse
//! upsampling matrix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{MeshState, SparseRowMatrix};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    dtype: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    nnz: Option<usize>,
}

/// `<stem>.json` next to `<stem>.bin`.
pub fn sidecar_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("json")
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_sidecar(bin_path: &Path) -> Result<Sidecar> {
    let path = sidecar_path(bin_path);
    let bytes = read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        )
    })
}

fn write_sidecar(bin_path: &Path, sidecar: &Sidecar) -> Result<()> {
    let path = sidecar_path(bin_path);
    let mut text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())
}

fn size_mismatch(path: &Path, expected: usize, got: usize) -> Error {
    Error::io(
        path,
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("expected {expected} bytes per the sidecar, found {got}"),
        ),
    )
}

/// Write a tensor as f32 little-endian plus its sidecar.
pub fn write_tensor(bin_path: &Path, t: &Tensor) -> Result<()> {
    let mut bytes = Vec::with_capacity(t.len() * 4);
    for &v in t.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_file(bin_path, &bytes)?;
    write_sidecar(
        bin_path,
        &Sidecar {
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            nnz: None,
        },
    )
}

/// Read an f32 tensor (values widened to f64, validated finite).
pub fn read_tensor(bin_path: &Path) -> Result<Tensor> {
    let sidecar = read_sidecar(bin_path)?;
    if sidecar.dtype != "f32" {
        return Err(Error::Validation(format!(
            "{}: expected dtype f32, got {}",
            bin_path.display(),
            sidecar.dtype
        )));
    }
    let bytes = read_file(bin_path)?;
    let count: usize = sidecar.shape.iter().product();
    if bytes.len() != count * 4 {
        return Err(size_mismatch(bin_path, count * 4, bytes.len()));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "{}: non-finite value in tensor data",
                bin_path.display()
            )));
        }
        data.push(v);
    }
    Tensor::new(&sidecar.shape, data)
}

/// Write face indices as a `[n, 3]` u32 tensor.
pub fn write_faces(bin_path: &Path, faces: &[[usize; 3]]) -> Result<()> {
    let mut bytes = Vec::with_capacity(faces.len() * 12);
    for face in faces {
        for &v in face {
            bytes.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    write_file(bin_path, &bytes)?;
    write_sidecar(
        bin_path,
        &Sidecar {
            shape: vec![faces.len(), 3],
            dtype: "u32".into(),
            nnz: None,
        },
    )
}

pub fn read_faces(bin_path: &Path) -> Result<Vec<[usize; 3]>> {
    let sidecar = read_sidecar(bin_path)?;
    if sidecar.dtype != "u32" || sidecar.shape.len() != 2 || sidecar.shape[1] != 3 {
        return Err(Error::Validation(format!(
            "{}: faces must be a [n, 3] u32 tensor",
            bin_path.display()
        )));
    }
    let bytes = read_file(bin_path)?;
    let count = sidecar.shape[0] * 3;
    if bytes.len() != count * 4 {
        return Err(size_mismatch(bin_path, count * 4, bytes.len()));
    }
    let mut flat = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(4) {
        flat.push(u32::from_le_bytes(chunk.try_into().unwrap()) as usize);
    }
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Write a sparse matrix as `(u32 row, u32 col, f32 value)` records.
pub fn write_sparse(bin_path: &Path, m: &SparseRowMatrix) -> Result<()> {
    let triplets = m.triplets();
    let mut bytes = Vec::with_capacity(triplets.len() * 12);
    for (r, c, v) in &triplets {
        bytes.extend_from_slice(&(*r as u32).to_le_bytes());
        bytes.extend_from_slice(&(*c as u32).to_le_bytes());
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    write_file(bin_path, &bytes)?;
    write_sidecar(
        bin_path,
        &Sidecar {
            shape: vec![m.n_rows(), m.n_cols()],
            dtype: "coo".into(),
            nnz: Some(triplets.len()),
        },
    )
}

pub fn read_sparse(bin_path: &Path) -> Result<SparseRowMatrix> {
    let sidecar = read_sidecar(bin_path)?;
    if sidecar.dtype != "coo" || sidecar.shape.len() != 2 {
        return Err(Error::Validation(format!(
            "{}: expected a coo sparse matrix sidecar",
            bin_path.display()
        )));
    }
    let nnz = sidecar.nnz.ok_or_else(|| {
        Error::Validation(format!("{}: coo sidecar missing nnz", bin_path.display()))
    })?;
    let bytes = read_file(bin_path)?;
    if bytes.len() != nnz * 12 {
        return Err(size_mismatch(bin_path, nnz * 12, bytes.len()));
    }
    let mut triplets = Vec::with_capacity(nnz);
    for rec in bytes.chunks_exact(12) {
        let r = u32::from_le_bytes(rec[0..4].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(rec[4..8].try_into().unwrap()) as usize;
        let v = f32::from_le_bytes(rec[8..12].try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "{}: non-finite sparse value",
                bin_path.display()
            )));
        }
        triplets.push((r, c, v));
    }
    SparseRowMatrix::from_triplets(sidecar.shape[0], sidecar.shape[1], &triplets)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleManifest {
    tensors: Vec<BundleEntry>,
}

fn bundle_bin_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Save named tensors as one manifest + one concatenated binary.
pub fn save_bundle(manifest_path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let manifest = BundleManifest {
        tensors: entries
            .iter()
            .map(|(name, t)| BundleEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(manifest_path, text.as_bytes())?;
    let mut bytes = Vec::new();
    for (_, t) in entries {
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_file(&bundle_bin_path(manifest_path), &bytes)
}

/// Load a weight bundle back into named tensors (manifest order).
pub fn load_bundle(manifest_path: &Path) -> Result<Vec<(String, Tensor)>> {
    let manifest: BundleManifest =
        serde_json::from_slice(&read_file(manifest_path)?).map_err(|e| {
            Error::io(
                manifest_path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })?;
    let bin_path = bundle_bin_path(manifest_path);
    let bytes = read_file(&bin_path)?;
    let total: usize = manifest
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if bytes.len() != total * 4 {
        return Err(size_mismatch(&bin_path, total * 4, bytes.len()));
    }
    let mut out = Vec::with_capacity(manifest.tensors.len());
    let mut offset = 0usize;
    for entry in &manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for chunk in bytes[offset..offset + count * 4].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{}: non-finite value in tensor '{}'",
                    bin_path.display(),
                    entry.name
                )));
            }
            data.push(v);
        }
        offset += count * 4;
        out.push((entry.name.clone(), Tensor::new(&entry.shape, data)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshManifest {
    template: String,
    faces: String,
    upsample: String,
}

/// Save mesh assets: manifest plus the three referenced files (paths are
/// relative to the manifest).
pub fn save_mesh(manifest_path: &Path, mesh: &MeshState) -> Result<()> {
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let manifest = MeshManifest {
        template: "mesh_template.bin".into(),
        faces: "mesh_faces.bin".into(),
        upsample: "mesh_upsample.bin".into(),
    };
    write_tensor(&dir.join(&manifest.template), &mesh.template)?;
    write_faces(&dir.join(&manifest.faces), &mesh.faces)?;
    write_sparse(&dir.join(&manifest.upsample), &mesh.upsample)?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(manifest_path, text.as_bytes())
}

/// Load and validate mesh assets.
pub fn load_mesh(manifest_path: &Path) -> Result<MeshState> {
    let manifest: MeshManifest =
        serde_json::from_slice(&read_file(manifest_path)?).map_err(|e| {
            Error::io(
                manifest_path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })?;
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let template = read_tensor(&dir.join(&manifest.template))?;
    let faces = read_faces(&dir.join(&manifest.faces))?;
    let upsample = read_sparse(&dir.join(&manifest.upsample))?;
    MeshState::new(template, faces, upsample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use crate::tensor::CountingContext;

    #[test]
    fn tensor_roundtrip_within_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let t = synthetic::features(3, 4, 1);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(t.max_abs_diff(&back).unwrap() < 1e-6);
    }

    #[test]
    fn tensor_size_mismatch_is_io_error_naming_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let t = synthetic::features(3, 4, 1);
        write_tensor(&path, &t).unwrap();
        std::fs::write(&path, [0u8; 7]).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("x.bin"), "{err}");
    }

    #[test]
    fn missing_sidecar_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.bin");
        std::fs::write(&path, [0u8; 4]).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn faces_and_sparse_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let faces = vec![[0usize, 1, 2], [2, 3, 4]];
        let fpath = dir.path().join("faces.bin");
        write_faces(&fpath, &faces).unwrap();
        assert_eq!(read_faces(&fpath).unwrap(), faces);

        let m = synthetic::balanced_upsample(30, 12);
        let spath = dir.path().join("up.bin");
        write_sparse(&spath, &m).unwrap();
        let back = read_sparse(&spath).unwrap();
        assert_eq!(back.n_rows(), 30);
        assert_eq!(back.n_cols(), 12);
        back.validate_row_stochastic(1e-6).unwrap();
    }

    #[test]
    fn bundle_roundtrip_and_corruption_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        let entries = vec![
            ("a.w".to_string(), synthetic::features(2, 3, 7)),
            ("b.w".to_string(), synthetic::features(4, 1, 8)),
        ];
        save_bundle(&path, &entries).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a.w");
        assert!(entries[1].1.max_abs_diff(&back[1].1).unwrap() < 1e-6);

        // truncate the payload: must fail as an I/O error naming the file
        let bin = path.with_extension("bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_bundle(&path).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("weights.bin"), "{err}");
    }

    #[test]
    fn mesh_manifest_roundtrip_validates() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = synthetic::mesh_state(12, 30, 2).unwrap();
        let path = dir.path().join("mesh.json");
        save_mesh(&path, &mesh).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.n_coarse(), 12);
        assert_eq!(back.n_fine(), 30);
        let mut ctx = CountingContext::new();
        let x = synthetic::features(12, 3, 3);
        let a = mesh.upsample.apply(&mut ctx, &x).unwrap();
        let b = back.upsample.apply(&mut ctx, &x).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }
}
