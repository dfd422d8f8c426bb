use std::io::Write;
use std::path::PathBuf;

use dpclust_cli::dataset::load_dataset;
use dpclust_cli::design::{build_design, developmental_design, read_matrix};
use tempfile::TempDir;

fn file(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/expression_fixture.tsv")
}

#[test]
fn checked_in_fixture_has_expected_shape() {
    let (t, warnings) = load_dataset(&fixture(), &["class".into()]).unwrap();
    assert_eq!((t.n(), t.samples()), (112, 9));
    assert!(warnings.is_empty());
    assert_eq!(t.columns, ["E11", "E13", "E15", "E18", "E21", "P0", "P7", "P14", "A"]);
    assert_eq!(t.annotation("class").unwrap().len(), 112);
    assert_eq!(t.ids[0], "gene001");
}

#[test]
fn minimal_two_by_one_file_loads() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "m.tsv", "id\tx\na\t1.5\nb\t-2\n");
    let (t, _) = load_dataset(&p, &[]).unwrap();
    assert_eq!(t.ids, ["a", "b"]);
    assert_eq!(t.values, [1.5, -2.0]);
    assert_eq!(t.row(1), [-2.0]);
}

#[test]
fn ragged_row_names_its_index() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "r.tsv", "id\tx\ty\na\t1\t2\nb\t3\nc\t4\t5\n");
    let err = load_dataset(&p, &[]).unwrap_err().to_string();
    assert!(err.contains("row 2"), "{err}");
    assert!(err.contains("expected 3 fields, found 2"), "{err}");
}

#[test]
fn non_numeric_and_missing_cells_name_row_and_column() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "n.tsv", "id\tx\ty\na\t1\t2\nb\t3\tNA\n");
    let err = load_dataset(&p, &[]).unwrap_err().to_string();
    assert!(err.contains("row 2, column 3 ('y')"), "{err}");
    let p = file(&dir, "e.tsv", "id\tx\ty\na\t\t2\nb\t3\t1\n");
    let err = load_dataset(&p, &[]).unwrap_err().to_string();
    assert!(err.contains("row 1, column 2"), "{err}");
}

#[test]
fn duplicate_ids_get_suffixes_and_warnings() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.tsv", "id\tx\ng\t1\ng\t2\nh\t3\ng\t4\n");
    let (t, warnings) = load_dataset(&p, &[]).unwrap();
    assert_eq!(t.ids, ["g", "g#2", "h", "g#3"]);
    assert_eq!(warnings.len(), 2);
    assert!(warnings[0].contains("row 2"));
}

#[test]
fn too_few_items_or_unknown_annotation_are_errors() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "one.tsv", "id\tx\na\t1\n");
    assert!(load_dataset(&p, &[]).is_err());
    let p = file(&dir, "two.tsv", "id\tx\na\t1\nb\t2\n");
    assert!(load_dataset(&p, &["class".into()]).is_err());
}

#[test]
fn annotation_columns_are_kept_as_text() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "a.tsv", "id\tgroup\tx\na\tred\t1\nb\tblue\t2\n");
    let (t, _) = load_dataset(&p, &["group".into()]).unwrap();
    assert_eq!(t.columns, ["x"]);
    assert_eq!(t.annotation("group").unwrap(), ["red", "blue"]);
}

#[test]
fn default_design_rows() {
    let z = developmental_design();
    assert_eq!(z.shape(), (9, 5));
    let row = |r: usize| z.row(r).iter().copied().collect::<Vec<f64>>();
    assert_eq!(row(0), [1.0, 11.0, 0.0, 0.0, 0.0]);
    assert_eq!(row(1), [1.0, 13.0, 0.0, 0.0, 0.0]);
    assert_eq!(row(5), [0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(row(6), [0.0, 0.0, 1.0, 7.0, 0.0]);
    assert_eq!(row(8), [0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn design_from_files_and_dimension_checks() {
    let dir = TempDir::new().unwrap();
    let z = file(&dir, "z.csv", "# intercept, slope\n1,0\n1,1\n\n1,2\n");
    let m = read_matrix(&z).unwrap();
    assert_eq!(m.shape(), (3, 2));
    assert_eq!(m[(2, 1)], 2.0);
    let d = build_design(3, Some(&z), None).unwrap();
    assert_eq!(d.x().ncols(), 0);
    assert!(build_design(4, Some(&z), None).is_err());
    let x = file(&dir, "x.csv", "0.5\n0.1\n");
    assert!(build_design(3, Some(&z), Some(&x)).is_err());
    let bad = file(&dir, "bad.csv", "1,2\n3\n");
    assert!(read_matrix(&bad).is_err());
    assert_eq!(build_design(9, None, None).unwrap().z(), &developmental_design());
    assert_eq!(build_design(4, None, None).unwrap().z().ncols(), 2);
}
