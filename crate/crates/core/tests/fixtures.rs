use mddc_core::io::{fixture_info, fixture_names, load_fixture};
use mddc_core::validate_and_fix;

#[test]
fn fixture_totals_are_pinned() {
    let pinned = [
        ("synthetic_statin49", 49, 7, 63_983_733),
        ("synthetic_statin101", 102, 5, 64_021_990),
        ("synthetic_betablocker500", 501, 9, 77_367_526),
        ("synthetic_sedative1000", 1001, 11, 81_244_690),
    ];
    assert_eq!(fixture_names().len(), pinned.len());
    for (name, rows, cols, total) in pinned {
        let t = load_fixture(name).unwrap();
        assert_eq!((t.n_rows(), t.n_cols(), t.total()), (rows, cols, total), "{name}");
        assert!(fixture_info(name).is_some());
        let again = validate_and_fix(&t.to_raw(), true).unwrap();
        assert_eq!(again.table, t);
    }
}
