mod support;

#[test]
fn dataset_files_round_trip() {
    support::dataset_files(64).unwrap();
}

#[test]
fn index_directories_round_trip() {
    support::index_dirs(24).unwrap();
}

#[test]
fn wire_frames_round_trip() {
    support::wire_frames(256).unwrap();
}
