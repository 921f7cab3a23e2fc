use ifspi::experiment::{run_iccd, run_spi, Mode, RunConfig};
use ifspi::Error;

fn noiseless(mode: Mode) -> RunConfig {
    RunConfig {
        mode,
        noiseless: true,
        ..RunConfig::default()
    }
}

#[test]
fn iccd_difference_is_half_the_full_spi_reconstruction() {
    let iccd = run_iccd(&noiseless(Mode::Iccd)).unwrap();
    let mut spi_config = noiseless(Mode::Spi);
    spi_config.spi.masks = 4096;
    let spi = run_spi(&spi_config).unwrap();
    let scale = iccd.difference.iter().cloned().fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (d, s) in iccd.difference.iter().zip(spi.image.iter()) {
        assert!((2.0 * d - s).abs() <= 1e-9 * 2.0 * scale, "{d} vs {s}");
    }
}

#[test]
fn noisy_iccd_mean_converges_to_noiseless() {
    let mut config = noiseless(Mode::Iccd);
    config.object.width = 16;
    config.object.height = 16;
    config.emission.rate = 50.0;
    let expected = run_iccd(&config).unwrap();
    config.noiseless = false;

    let seeds = 400;
    let sampled = [(0usize, 0usize), (3, 5), (4, 8), (7, 7), (8, 4), (10, 9), (12, 3), (15, 15)];
    let mut sums = vec![0.0; sampled.len()];
    for seed in 0..seeds {
        config.seed = seed;
        let run = run_iccd(&config).unwrap();
        for (s, &(r, c)) in sums.iter_mut().zip(&sampled) {
            *s += run.difference[[r, c]];
        }
    }
    for (s, &(r, c)) in sums.iter().zip(&sampled) {
        let mean = s / seeds as f64;
        // difference of two independent Poisson counts
        let var = expected.frames[0][[r, c]] + expected.frames[1][[r, c]];
        let sigma = (var / seeds as f64).sqrt();
        let want = expected.difference[[r, c]];
        assert!((mean - want).abs() <= 3.0 * sigma, "pixel ({r}, {c}): {mean} vs {want} ± {sigma}");
    }
}

#[test]
fn config_file_sections_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "mode = \"spi\"\nseed = 9\nnoiseless = true\n\n[model]\nsignal_vis = 0.8\n\n[model.ifm]\nmode_overlap = 0.7\n\n[spi]\nscale = 4\nmasks = 256\n",
    )
    .unwrap();
    let config: RunConfig = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(config.mode, Mode::Spi);
    assert_eq!(config.model.signal_vis, 0.8);
    assert_eq!(config.model.ifm.mode_overlap, 0.7);
    assert_eq!(config.model.ifm.transmissivity, 0.5);
    let run = run_spi(&config).unwrap();
    assert_eq!(run.image.dim(), (16, 16));

    let mut bad = config.clone();
    bad.spi.masks = 300;
    assert!(matches!(run_spi(&bad), Err(Error::InvalidConfig(_))));
    let mut missing = config;
    missing.object.path = Some(dir.path().join("absent.pgm"));
    assert!(matches!(run_spi(&missing), Err(Error::Io { .. })));
}
