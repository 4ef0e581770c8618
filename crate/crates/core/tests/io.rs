//! NIfTI and manifest round trips.

use ndarray::Array3;
use trabs_core::io::manifest::{CaseEntry, Manifest};
use trabs_core::io::nifti_io::{read_mask, read_volume, write_mask, write_volume};
use trabs_core::phantom::{generate_phantom, PhantomSpec};
use trabs_core::volume::{BinaryMask, Volume};

#[test]
fn volume_round_trip_nii_and_gz() {
    let dir = tempfile::tempdir().unwrap();
    let data = Array3::from_shape_fn((3, 4, 5), |(d, h, w)| (100 * d + 10 * h + w) as f32);
    let v = Volume::new(data, [3.0, 1.25, 0.75], "roundtrip").unwrap();
    for name in ["vol.nii", "vol.nii.gz"] {
        let path = dir.path().join(name);
        write_volume(&path, &v).unwrap();
        let back = read_volume(&path, "roundtrip").unwrap();
        assert_eq!(back.shape(), v.shape(), "{name}");
        assert_eq!(back.data, v.data, "{name}");
        for (a, b) in back.spacing.iter().zip(&v.spacing) {
            assert!((a - b).abs() < 1e-5, "{name}: spacing {a} vs {b}");
        }
    }
}

#[test]
fn mask_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = Array3::from_shape_fn((4, 4, 4), |(d, h, w)| u8::from((d + h + w) % 3 == 0));
    let m = BinaryMask::new(data, [3.0, 1.0, 1.0], "mask").unwrap();
    let path = dir.path().join("mask.nii.gz");
    write_mask(&path, &m).unwrap();
    let back = read_mask(&path, "mask").unwrap();
    assert_eq!(back.data, m.data);
}

#[test]
fn ingestion_rejects_non_finite() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = Array3::from_elem((2, 2, 2), 1.0f32);
    data[(0, 0, 0)] = f32::NAN;
    // bypass Volume::new checks by writing raw via the writer
    let v = Volume {
        data,
        spacing: [1.0; 3],
        id: "bad".into(),
    };
    let path = dir.path().join("bad.nii");
    write_volume(&path, &v).unwrap();
    assert!(read_volume(&path, "bad").is_err());
}

#[test]
fn manifest_round_trip_with_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let case = generate_phantom(&PhantomSpec::default()).unwrap();

    write_volume(&dir.path().join("pre.nii.gz"), &case.pre).unwrap();
    write_volume(&dir.path().join("post.nii.gz"), &case.post).unwrap();
    write_mask(&dir.path().join("breast.nii.gz"), &case.breast_mask).unwrap();
    write_mask(&dir.path().join("fgt.nii.gz"), case.fgt_mask.as_ref().unwrap()).unwrap();

    let manifest = Manifest {
        cases: vec![CaseEntry {
            case_id: case.case_id.clone(),
            pre: "pre.nii.gz".into(),
            post: "post.nii.gz".into(),
            breast_mask: "breast.nii.gz".into(),
            fgt_mask: Some("fgt.nii.gz".into()),
        }],
    };
    let mpath = dir.path().join("manifest.toml");
    manifest.save(&mpath).unwrap();

    let loaded = Manifest::load(&mpath).unwrap();
    assert_eq!(loaded.cases.len(), 1);
    let back = loaded.load_case(dir.path(), 0).unwrap();
    back.validate().unwrap();
    assert_eq!(back.breast_mask.data, case.breast_mask.data);
    assert_eq!(back.fgt_mask.unwrap().data, case.fgt_mask.unwrap().data);
    assert_eq!(back.pre.data, case.pre.data);
}

#[test]
fn manifest_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let entry = CaseEntry {
        case_id: "dup".into(),
        pre: "a.nii".into(),
        post: "b.nii".into(),
        breast_mask: "c.nii".into(),
        fgt_mask: None,
    };
    let manifest = Manifest {
        cases: vec![entry.clone(), entry],
    };
    let path = dir.path().join("dup.toml");
    manifest.save(&path).unwrap();
    assert!(Manifest::load(&path).is_err());
}

#[test]
fn manifest_bytes_are_deterministic() {
    let manifest = Manifest {
        cases: vec![CaseEntry {
            case_id: "c0".into(),
            pre: "p.nii".into(),
            post: "q.nii".into(),
            breast_mask: "b.nii".into(),
            fgt_mask: Some("f.nii".into()),
        }],
    };
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("m1.toml");
    let p2 = dir.path().join("m2.toml");
    manifest.save(&p1).unwrap();
    manifest.save(&p2).unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
}
