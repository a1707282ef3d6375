use qo2::basis::SectorBasis;
use qo2::exact::{self, entanglement_entropy_exact};
use qo2::linalg;
use qo2::mps::{dmrg_ground_state, dmrg_warm_start, half_chain_entropy, overlap, overlap_signed, DmrgSettings, MpsState};
use qo2::observables::{infidelity_of_vectors, measure_point_dmrg, measure_point_exact};
use qo2::{ChainSpec, Error, ModelVariant};

fn spec(variant: ModelVariant, s: u32, l: usize, d: f64) -> ChainSpec {
    ChainSpec::new(variant, s, l, d).unwrap()
}

fn tight() -> DmrgSettings {
    DmrgSettings { epsilon: 1e-12, ..DmrgSettings::default() }
}

#[test]
fn dmrg_matches_exact_ground_state() {
    for (variant, s, l, d) in [
        (ModelVariant::UOperator, 1, 8, 0.8),
        (ModelVariant::Ladder, 2, 6, 0.6),
        (ModelVariant::UOperatorJz { jz: 0.5 }, 1, 8, 1.2),
    ] {
        let c = spec(variant, s, l, d);
        let r = dmrg_ground_state(&c, &tight()).unwrap();
        let ed = exact::ground_state(&c, 0).unwrap();
        let basis = SectorBasis::new(c.spin, l, 0).unwrap();
        assert!(r.converged);
        assert!((r.energy - ed.energy).abs() < 1e-9, "{variant:?}: {} vs {}", r.energy, ed.energy);
        let s_ed = entanglement_entropy_exact(&ed, &basis, l / 2).unwrap();
        assert!((r.half_chain_entropy - s_ed).abs() < 1e-7, "{} vs {s_ed}", r.half_chain_entropy);
        let v = r.mps.to_sector_vector(&basis);
        assert!(infidelity_of_vectors(&v, &ed.vector) < 1e-10);
    }
}

#[test]
fn converged_state_is_in_canonical_form() {
    let r = dmrg_ground_state(&spec(ModelVariant::UOperator, 1, 10, 1.0), &DmrgSettings::default()).unwrap();
    let mut mps = r.mps;
    assert!(mps.orthonormality_error() < 1e-10);
    assert!((mps.norm().unwrap() - 1.0).abs() < 1e-10);
    let dims = mps.bond_dims();
    assert_eq!((dims[0], *dims.last().unwrap()), (1, 1));
    let before = half_chain_entropy(&mps).unwrap();
    for target in [0, 9, 3, 7] {
        mps.move_center_to(target).unwrap();
        assert_eq!(mps.center, target);
        assert!(mps.orthonormality_error() < 1e-10);
        assert!((mps.norm().unwrap() - 1.0).abs() < 1e-10);
    }
    assert!((half_chain_entropy(&mps).unwrap() - before).abs() < 1e-12);
}

#[test]
fn overlaps_of_product_states() {
    let c = spec(ModelVariant::UOperator, 1, 6, 1.0);
    let a = MpsState::product(&c, &[1, -1, 0, 0, 1, -1]).unwrap();
    let b = MpsState::product(&c, &[-1, 1, 0, 0, 1, -1]).unwrap();
    assert_eq!(overlap_signed(&a, &a).unwrap(), 1.0);
    assert_eq!(overlap_signed(&a, &b).unwrap(), 0.0);
    let other = MpsState::product(&c, &[1, 0, 0, 0, 0, 0]).unwrap();
    assert_eq!(overlap(&a, &other).unwrap(), 0.0);
    assert!(MpsState::product(&c, &[2, 0, 0, 0, 0, 0]).is_err());
    assert!(MpsState::product(&c, &[0; 4]).is_err());
}

#[test]
fn energy_bounds_exact_ground_state_from_above() {
    let c = spec(ModelVariant::UOperator, 1, 8, 1.0);
    let ed = exact::ground_state(&c, 0).unwrap().energy;
    for epsilon in [1e-4, 1e-6, 1e-8] {
        let r = dmrg_ground_state(&c, &DmrgSettings { epsilon, ..DmrgSettings::default() }).unwrap();
        assert!(r.energy >= ed - 1e-10, "epsilon {epsilon}: {} < {ed}", r.energy);
        assert!(r.max_truncation_error <= epsilon);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let r = dmrg_ground_state(&spec(ModelVariant::Ladder, 2, 6, 0.9), &DmrgSettings::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.mps");
    r.mps.save(&path).unwrap();
    let back = MpsState::load(&path).unwrap();
    assert_eq!(back, r.mps);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(MpsState::load(&path), Err(Error::Checkpoint(_))));
    bytes[0] ^= 0xff;
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, &bytes).unwrap();
    assert!(MpsState::load(&path).is_err());
}

#[test]
fn warm_start_reaches_the_cold_answer() {
    let c = spec(ModelVariant::UOperator, 1, 12, 1.0);
    let s = DmrgSettings { epsilon: 1e-11, ..DmrgSettings::default() };
    let seed = dmrg_ground_state(&c, &s).unwrap();
    let next = c.with_d(1.01);
    let warm = dmrg_warm_start(&next, &s, &seed.mps).unwrap();
    let cold = dmrg_ground_state(&next, &s).unwrap();
    assert!(warm.converged && cold.converged);
    assert!((warm.energy - cold.energy).abs() < 1e-9);
    assert!((warm.half_chain_entropy - cold.half_chain_entropy).abs() < 1e-7);
    assert!(1.0 - overlap(&warm.mps, &cold.mps).unwrap() < 1e-9);
    let wrong = spec(ModelVariant::UOperator, 1, 10, 1.0);
    assert!(dmrg_warm_start(&wrong, &s, &seed.mps).is_err());
}

#[test]
fn dmrg_point_matches_exact_point() {
    let c = spec(ModelVariant::UOperator, 1, 10, 0.9);
    let ed = measure_point_exact(&c, 5e-4).unwrap();
    let (p, _) = measure_point_dmrg(&c, 5e-4, &tight(), None).unwrap();
    assert!((p.energy - ed.energy).abs() < 1e-9);
    assert!((p.entropy - ed.entropy).abs() < 1e-7);
    assert!((p.fidelity - ed.fidelity).abs() < 1e-8);
    assert!(p.quality.converged && !p.quality.bond_cap_reached);
}

#[test]
fn nonzero_sectors_and_bond_caps() {
    let c = spec(ModelVariant::UOperator, 1, 6, 0.7);
    let s = DmrgSettings { magnetization: 2, epsilon: 1e-12, ..DmrgSettings::default() };
    let r = dmrg_ground_state(&c, &s).unwrap();
    let ed = exact::ground_state(&c, 2).unwrap();
    assert!((r.energy - ed.energy).abs() < 1e-9);
    assert_eq!(r.mps.magnetization, 2);
    let capped = DmrgSettings { max_bond: 2, ..DmrgSettings::default() };
    let r = dmrg_ground_state(&spec(ModelVariant::UOperator, 1, 10, 0.5), &capped).unwrap();
    assert!(r.bond_cap_reached && r.largest_bond <= 2);
    let empty = DmrgSettings { magnetization: 7, ..DmrgSettings::default() };
    assert!(matches!(dmrg_ground_state(&c, &empty), Err(Error::EmptySector { .. })));
}

#[test]
fn random_vectors_never_beat_dmrg() {
    let c = spec(ModelVariant::UOperator, 1, 6, 1.0);
    let r = dmrg_ground_state(&c, &tight()).unwrap();
    let csr = qo2::model::build_hamiltonian(&c, Some(0)).unwrap().to_csr();
    let mut hx = vec![0.0; csr.n];
    for seed in 0..20 {
        let x = linalg::random_unit_vector(csr.n, seed);
        csr.matvec(&x, &mut hx);
        assert!(r.energy <= linalg::dot(&x, &hx) + 1e-10);
    }
}
