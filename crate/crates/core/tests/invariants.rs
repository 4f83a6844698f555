use proptest::prelude::*;
use qszego::atoms::{check_atom, make_atom, project_atom, AtomSpec};
use qszego::group::{dist, pi_inv, pi_map};
use qszego::kernel::{kernel_boundary, kernel_boundary_pair, KernelContext};
use qszego::tiling::{children, parent, BasicTile, Membership, TileAddress};
use qszego::{GroupDim, GroupPoint, Quaternion, SiegelPoint};

fn point(n: usize) -> impl Strategy<Value = GroupPoint> {
    (prop::collection::vec(-3.0..3.0f64, 4 * (n - 1)), prop::array::uniform3(-3.0..3.0f64))
        .prop_map(|(y, t)| GroupPoint::new(t, y))
}

fn quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-2.0..2.0f64).prop_map(Quaternion::from_array)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_axioms(g in point(2), h in point(2), k in point(2)) {
        let lhs = g.mul(&h).mul(&k);
        let rhs = g.mul(&h.mul(&k));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-11);
        let e = GroupPoint::identity(g.dim());
        prop_assert!(g.mul(&g.inverse()).max_abs_diff(&e) < 1e-12);
        prop_assert!(g.mul(&e).max_abs_diff(&g) == 0.0);
    }

    #[test]
    fn dilation_is_an_automorphism(g in point(3), h in point(3), r in 0.1..5.0f64) {
        let lhs = g.mul(&h).dilate(r).unwrap();
        let rhs = g.dilate(r).unwrap().mul(&h.dilate(r).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-11 * (1.0 + r * r));
        prop_assert!((g.dilate(r).unwrap().hom_norm() - r * g.hom_norm()).abs() <= 1e-12 * (1.0 + r * g.hom_norm()));
    }

    #[test]
    fn distance_is_left_invariant(g in point(2), h in point(2), k in point(2)) {
        let d = dist(&g, &h);
        prop_assert!((dist(&k.mul(&g), &k.mul(&h)) - d).abs() <= 1e-9 * (1.0 + d));
        prop_assert!((dist(&h, &g) - d).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn siegel_coordinates_round_trip(g in point(2), s in 0.01..4.0f64) {
        let p = SiegelPoint::new(s, g);
        let back = pi_map(&pi_inv(&p)).unwrap();
        prop_assert!((back.s - p.s).abs() < 1e-10);
        prop_assert!(back.g.max_abs_diff(&p.g) < 1e-10);
    }

    #[test]
    fn boundary_kernel_is_translation_invariant(g in point(2), h in point(2), k in point(2)) {
        prop_assume!(g.inverse().mul(&h).hom_norm() > 0.3);
        let ctx = KernelContext::new(2, 1.0).unwrap();
        let a = kernel_boundary_pair(&ctx, &g, &h).unwrap();
        let b = kernel_boundary_pair(&ctx, &k.mul(&g), &k.mul(&h)).unwrap();
        prop_assert!(a.max_abs_diff(b) <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn boundary_kernel_is_homogeneous(g in point(2), r in 0.2..4.0f64) {
        prop_assume!(g.hom_norm() > 0.2);
        let ctx = KernelContext::new(2, 1.0).unwrap();
        let k1 = kernel_boundary(&ctx, &g).unwrap();
        let kr = kernel_boundary(&ctx, &g.dilate(r).unwrap()).unwrap();
        let q = GroupDim::new(2).unwrap().q_f64();
        prop_assert!(kr.max_abs_diff(k1 * r.powf(-q)) <= 1e-9 * k1.norm() * r.powf(-q));
    }

    #[test]
    fn located_tile_contains_the_point(g in point(2), j in -1i32..3) {
        let tile = BasicTile::new(GroupDim::new(2).unwrap());
        let addr = tile.locate(&g, j).unwrap();
        prop_assert_ne!(tile.contains(&addr, &g), Membership::No);
        prop_assert_eq!(addr.j, j);
    }

    #[test]
    fn parent_undoes_children(a in prop::collection::vec(-5i64..5, 4), b in prop::array::uniform3(-5i64..5), j in -2i32..3) {
        let dim = GroupDim::new(2).unwrap();
        let addr = TileAddress { j, a, b };
        let kids = children(dim, &addr);
        prop_assert_eq!(kids.len(), 1 << dim.q());
        for kid in kids.iter().step_by(97) {
            prop_assert_eq!(&parent(kid), &addr);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn projection_is_right_linear(lambda in quat(), seed in 0u64..1000) {
        let dim = GroupDim::new(2).unwrap();
        let ctx = KernelContext::new(2, 1.0).unwrap();
        let spec = AtomSpec::new(GroupPoint::identity(dim), 0.5, 1.0, 0, seed).with_nodes(2000);
        let atom = make_atom(dim, spec).unwrap();
        let at = SiegelPoint::new(0.3, GroupPoint::new([0.2, -0.1, 0.4], vec![0.3, 0.0, -0.2, 0.1]));
        let base = project_atom(&ctx, &atom, &at).unwrap();
        let scaled = project_atom(&ctx, &atom.right_mul(lambda), &at).unwrap();
        prop_assert!(scaled.max_abs_diff(base * lambda) <= 1e-12 * (1.0 + base.norm() * lambda.norm()));
    }

    #[test]
    fn made_atoms_pass_their_checks(seed in 0u64..1000, r in 0.05..20.0f64) {
        let dim = GroupDim::new(2).unwrap();
        let center = GroupPoint::new([1.0, -2.0, 0.5], vec![0.5, 0.1, 0.0, -1.0]);
        let atom = make_atom(dim, AtomSpec::new(center, r, 0.9, 1, seed).with_nodes(4000)).unwrap();
        let chk = check_atom(&atom, 2000);
        prop_assert!(chk.pass, "{:?}", chk);
    }
}
