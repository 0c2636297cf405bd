use emisr::dataset::DatasetManifest;
use emisr::grid::PATCH_SIZE;
use emisr::metrics::dataset_nmse_db;
use emisr::resample::bicubic_upsample;
use emisr::transform::QuantileTransform;

#[test]
fn probe_transform_space_baselines() {
    let base = std::path::Path::new("/tmp/cal/runs/data");
    let manifest = DatasetManifest::read_csv(&base.join("patches_s_fine.csv")).unwrap();
    let train = DatasetManifest {
        records: manifest
            .records_in(emisr::dataset::Split::Train)
            .cloned()
            .collect(),
        seed: manifest.seed,
        split_policy: manifest.split_policy.clone(),
    };
    let test = DatasetManifest {
        records: manifest
            .records_in(emisr::dataset::Split::Test)
            .cloned()
            .collect(),
        seed: manifest.seed,
        split_policy: manifest.split_policy.clone(),
    };
    let train_pairs = train.load_pairs(base, PATCH_SIZE).unwrap();
    let test_pairs = test.load_pairs(base, PATCH_SIZE).unwrap();
    let t = QuantileTransform::read_csv(std::path::Path::new(
        "/tmp/cal/runs/out/transform_s_fine.csv",
    ))
    .unwrap();
    println!("train {} test {}", train_pairs.len(), test_pairs.len());

    // 1. Pure transform round trip on HR.
    let mut rt: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &test_pairs {
        let z = t.apply_slice(&p.hr).unwrap();
        let back = t.invert_slice(&z).unwrap();
        rt.push((
            p.hr.iter().map(|v| *v as f64).collect(),
            back.iter().map(|v| *v as f64).collect(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = rt.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    println!("round-trip NMSE: {:.2} dB", dataset_nmse_db(&pairs).unwrap());

    // 2. Bicubic upsample in ORIGINAL space.
    let mut orig: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &test_pairs {
        let up = bicubic_upsample(&p.lr, PATCH_SIZE / 2, PATCH_SIZE / 2, 2).unwrap();
        orig.push((
            p.hr.iter().map(|v| *v as f64).collect(),
            up.iter().map(|v| *v as f64).collect(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = orig.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    println!("bicubic original-space NMSE: {:.2} dB", dataset_nmse_db(&pairs).unwrap());

    // 3. Bicubic upsample in TRANSFORM space, inverted back.
    let mut tsp: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &test_pairs {
        let z = t.apply_slice(&p.lr).unwrap();
        let up = bicubic_upsample(&z, PATCH_SIZE / 2, PATCH_SIZE / 2, 2).unwrap();
        let back = t.invert_slice(&up).unwrap();
        tsp.push((
            p.hr.iter().map(|v| *v as f64).collect(),
            back.iter().map(|v| *v as f64).collect(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = tsp.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    println!(
        "bicubic transform-space NMSE: {:.2} dB",
        dataset_nmse_db(&pairs).unwrap()
    );

    // 3b. Same, under a standard-normal target fitted on the train pool.
    let pool: Vec<f32> = train_pairs.iter().flat_map(|p| p.hr.iter().copied()).collect();
    let tn = QuantileTransform::fit(
        &pool,
        1000,
        emisr::transform::TargetDist::StandardNormal,
        emisr::grid::DomainTag::Simulated,
        50,
        100_000,
    )
    .unwrap();
    let mut tsn: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &test_pairs {
        let z = tn.apply_slice(&p.lr).unwrap();
        let up = bicubic_upsample(&z, PATCH_SIZE / 2, PATCH_SIZE / 2, 2).unwrap();
        let back = tn.invert_slice(&up).unwrap();
        tsn.push((
            p.hr.iter().map(|v| *v as f64).collect(),
            back.iter().map(|v| *v as f64).collect(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = tsn.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    println!(
        "bicubic normal-transform-space NMSE: {:.2} dB",
        dataset_nmse_db(&pairs).unwrap()
    );
    let mut rtn: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &test_pairs {
        let z = tn.apply_slice(&p.hr).unwrap();
        let back = tn.invert_slice(&z).unwrap();
        rtn.push((
            p.hr.iter().map(|v| *v as f64).collect(),
            back.iter().map(|v| *v as f64).collect(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = rtn.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    println!(
        "normal-target round-trip NMSE: {:.2} dB",
        dataset_nmse_db(&pairs).unwrap()
    );

    // 4. Distribution summary of HR values.
    let mut vals: Vec<f32> = train_pairs.iter().flat_map(|p| p.hr.iter().copied()).collect();
    vals.sort_by(f32::total_cmp);
    let q = |f: f64| vals[((vals.len() - 1) as f64 * f) as usize];
    println!(
        "HR values: min {:.3} q50 {:.3} q90 {:.3} q99 {:.3} q999 {:.4} max {:.4}",
        q(0.0),
        q(0.5),
        q(0.9),
        q(0.99),
        q(0.999),
        q(1.0)
    );
}
