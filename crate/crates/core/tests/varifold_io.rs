use vmono::catalog::Catalog;
use vmono::SampledVarifold;

#[test]
fn csv_round_trip_preserves_every_atom() {
    let catalog = Catalog::bundled();
    for name in ["round_sphere", "flat_disk", "geodesic_sphere_h3"] {
        let v = catalog.build(name, 8).unwrap().varifold;
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = SampledVarifold::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.atoms().len(), v.atoms().len(), "{name}");
        assert_eq!(back.boundary().len(), v.boundary().len(), "{name}");
        assert_eq!(back.space().curvature(), v.space().curvature());
        // the file carries the sample only; links back to source cells are dropped
        for (a, b) in v.atoms().iter().zip(back.atoms()) {
            assert!(b.cell.is_none());
            assert_eq!((&a.point, &a.frame, a.weight, &a.h), (&b.point, &b.frame, b.weight, &b.h), "{name}");
            assert_eq!((a.density, a.extent), (b.density, b.extent), "{name}");
        }
        assert_eq!(back.area(), v.area());
        assert_eq!(back.willmore_energy(), v.willmore_energy());
    }
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(SampledVarifold::read_csv("not a varifold\n1,2,3\n".as_bytes()).is_err());
    assert!(SampledVarifold::read_csv("".as_bytes()).is_err());
}
