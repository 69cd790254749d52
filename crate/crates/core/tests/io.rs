use num_complex::Complex64;
use proptest::prelude::*;
use qhd_core::experiments::{make_initial, InitialDataSpec};
use qhd_core::functionals::record;
use qhd_core::io::{
    dump_field, load_field, parse_config, read_field, read_record_csv, write_field, write_record_csv, StoredField,
    RECORD_HEADER,
};
use qhd_core::{ComplexField, FunctionalRecord, PressureLaw, QhdError, RealField, RunningIntegrals, TorusGrid};

fn csv_of(records: &[FunctionalRecord]) -> String {
    let mut buf = Vec::new();
    write_record_csv(&mut buf, records).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn empty_stream_is_header_only() {
    assert_eq!(csv_of(&[]), format!("{RECORD_HEADER}\n"));
}

#[test]
fn ground_record_row() {
    let grid = TorusGrid::square(16).unwrap();
    let law = PressureLaw::new(1, 1.0);
    let init = make_initial(&InitialDataSpec::ground(1.0, 0.25), &grid, &law).unwrap();
    let r = record(&init.state, &init.wave, &law, 1.0, 0.0, &RunningIntegrals::default(), 0.25).unwrap();
    let text = csv_of(&[r]);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row.len(), 14);
    for (i, x) in row.iter().enumerate() {
        let expect = if i == 1 || i == 10 { 1.0 } else { 0.0 };
        assert_eq!(*x, expect, "column {i}");
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)]
}

proptest! {
    #[test]
    fn record_csv_roundtrip_is_exact(vals in prop::collection::vec(prop::collection::vec(finite(), 14), 0..8)) {
        let records: Vec<FunctionalRecord> = vals
            .iter()
            .map(|v| FunctionalRecord {
                t: v[0],
                mass: v[1],
                energy: v[2],
                quantum: v[3],
                kinetic: v[4],
                internal: v[5],
                electric: v[6],
                gcp: v[7],
                entropy: v[8],
                combined: v[9],
                min_rho: v[10],
                cum_diss_v: v[11],
                cum_diss_sigma: v[12],
                cum_diss_v4: v[13],
            })
            .collect();
        let back = read_record_csv(csv_of(&records).as_bytes()).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
            prop_assert_eq!(a.cum_diss_v4.to_bits(), b.cum_diss_v4.to_bits());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn real_field_roundtrip_is_bitwise(vals in prop::collection::vec(any::<f64>(), 8 * 12)) {
        let grid = TorusGrid::new(8, 12).unwrap();
        let f = RealField::new(&grid, vals.clone());
        let mut buf = Vec::new();
        write_field(&mut buf, "rho", &f).unwrap();
        let (name, back) = read_field(&buf).unwrap();
        prop_assert_eq!(name, "rho");
        let StoredField::Real(g) = back else { panic!("kind changed") };
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(g.values()), bits(&vals));
    }

    #[test]
    fn complex_field_roundtrip_is_bitwise(re in prop::collection::vec(any::<f64>(), 64), im in prop::collection::vec(any::<f64>(), 64)) {
        let grid = TorusGrid::square(8).unwrap();
        let f = ComplexField::new(&grid, re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect());
        let mut buf = Vec::new();
        write_field(&mut buf, "psi t=0.5", &f).unwrap();
        let (name, back) = read_field(&buf).unwrap();
        prop_assert_eq!(name, "psi t=0.5");
        let StoredField::Complex(g) = back else { panic!("kind changed") };
        for (a, b) in g.values().iter().zip(f.values()) {
            prop_assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        }
    }
}

#[test]
fn field_file_layout_and_errors() {
    let grid = TorusGrid::square(8).unwrap();
    let f = RealField::from_fn(&grid, |x, y| x - 2.0 * y);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.qhdf");
    dump_field(&path, "f", &f).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"QHDF");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
    assert_eq!(bytes[16], 0);
    assert_eq!(bytes.len(), 4 + 4 + 8 + 1 + 2 + 1 + 64 * 8);
    assert_eq!(load_field(&path).unwrap().1, StoredField::Real(f));

    assert!(matches!(read_field(&bytes[..bytes.len() - 3]), Err(QhdError::Format(_))));
    assert!(matches!(read_field(&bytes[..10]), Err(QhdError::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_field(&bad), Err(QhdError::Format(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(read_field(&bad), Err(QhdError::Format(_))));
    let mut bad = bytes;
    bad[8] = 7;
    assert!(matches!(read_field(&bad), Err(QhdError::Format(_))));
}

#[test]
fn config_examples() {
    let c = parse_config("[grid]\nn1 = 32\nn2 = 32\n[physics]\ntau = 0.2\n").unwrap();
    assert_eq!((c.grid.n1, c.physics.tau, c.physics.m0), (32, 0.2, 1.0));

    match parse_config("[physics]\ntau = -1\n") {
        Err(QhdError::Validation(m)) => assert_eq!(m, "physics.tau must be > 0"),
        other => panic!("{other:?}"),
    }
    match parse_config("[physics]\ntau = 0.1\ntau = 0.2\n") {
        Err(QhdError::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("tau"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config("[grid]\nn3 = 4\n"), Err(QhdError::Parse { .. })));
    assert!(matches!(parse_config("[physics]\ntaus = [0.1, 0.2]\n"), Err(QhdError::Validation(_))));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            qhd_core::io::read_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
