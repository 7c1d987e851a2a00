//! Record and manifest files.

use ecgauth::ecgio::{
    read_record, write_record, EcgRecord, ManifestEntry, RecordManifest, RecordReader, Role,
};
use ecgauth::error::Error;
use proptest::prelude::*;

#[test]
fn documented_layout_parses() {
    let text = "fs_hz,512\nsubject,S01\nsession,a\nn,adc\n0,-12\n1,-9\r\n\n2,40\n";
    let mut r = RecordReader::new(text.as_bytes(), "inline".as_ref()).unwrap();
    assert_eq!(
        (r.fs, r.subject_id.as_str(), r.session_id.as_str()),
        (512, "S01", "a")
    );
    let samples: Vec<i32> = r.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(samples, vec![-12, -9, 40]);
}

#[test]
fn malformed_rows_report_their_line() {
    let gap = "fs_hz,512\nsubject,S\nsession,a\nn,adc\n0,1\n2,3\n";
    let err = RecordReader::new(gap.as_bytes(), "x".as_ref())
        .unwrap()
        .collect::<Result<Vec<i32>, _>>()
        .unwrap_err();
    assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
    let float = "fs_hz,512\nsubject,S\nsession,a\nn,adc\n0,1.5\n";
    let err = RecordReader::new(float.as_bytes(), "x".as_ref())
        .unwrap()
        .collect::<Result<Vec<i32>, _>>()
        .unwrap_err();
    assert!(matches!(err, Error::Parse { line: 5, .. }));
    assert!(RecordReader::new("fs_hz,0\n".as_bytes(), "x".as_ref()).is_err());
    assert!(RecordReader::new("subject,S\n".as_bytes(), "x".as_ref()).is_err());
}

#[test]
fn manifest_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let rec = EcgRecord {
        subject_id: "A".into(),
        session_id: "s1".into(),
        fs: 256,
        samples: vec![1, 2, 3],
    };
    std::fs::create_dir(dir.path().join("data")).unwrap();
    write_record(&rec, dir.path().join("data/a.csv")).unwrap();
    std::fs::write(
        dir.path().join("manifest.csv"),
        "subject,session,path,role\nA,s1,data/a.csv,enroll\n",
    )
    .unwrap();
    let m = RecordManifest::load(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(m.entries[0].path, dir.path().join("data/a.csv"));
    assert_eq!(read_record(&m.entries[0].path).unwrap(), rec);

    std::fs::write(
        dir.path().join("bad.csv"),
        "subject,session,path,role\nA,s1,data/a.csv,training\n",
    )
    .unwrap();
    assert!(RecordManifest::load(dir.path().join("bad.csv")).is_err());
    std::fs::write(
        dir.path().join("missing.csv"),
        "subject,session,path,role\nA,s1,data/nope.csv,enroll\n",
    )
    .unwrap();
    assert!(matches!(
        RecordManifest::load(dir.path().join("missing.csv")),
        Err(Error::Manifest(_))
    ));
}

#[test]
fn one_session_cannot_serve_two_roles() {
    let entry = |session: &str, path: &str, role| ManifestEntry {
        subject_id: "A".into(),
        session_id: session.into(),
        path: path.into(),
        role,
    };
    let m = RecordManifest {
        entries: vec![
            entry("s1", "a.csv", Role::Enroll),
            entry("s1", "b.csv", Role::Test),
        ],
    };
    assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    let m = RecordManifest {
        entries: vec![
            entry("s1", "a.csv", Role::Enroll),
            entry("s2", "a.csv", Role::Test),
        ],
    };
    assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    for role in [
        Role::Enroll,
        Role::Test,
        Role::IntruderPool,
        Role::Population,
    ] {
        assert_eq!(role.to_string().parse::<Role>().unwrap(), role);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn records_round_trip(
        samples in prop::collection::vec(any::<i32>(), 1..2000),
        fs in 128u32..4000,
        subject in "[A-Za-z0-9_-]{1,12}",
        session in "[A-Za-z0-9_. -]{1,12}",
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rec = EcgRecord { subject_id: subject, session_id: session, fs, samples };
        write_record(&rec, &path).unwrap();
        prop_assert_eq!(read_record(&path).unwrap(), rec);
    }
}
