mod common;

use std::fs;
use std::sync::OnceLock;

use madpfi_core::filter::TopK;
use madpfi_core::frame::Grouping;
use madpfi_core::lmm::{LmmSpec, Method};
use madpfi_core::pipeline::{
    fit_model, join_frame, run_report, windowed_diversity, PipelineConfig, StageStatus,
};
use madpfi_core::diversity::WindowSpec;
use madpfi_core::stats::{correlation_sweep, write_indicators, DiversityScale};
use madpfi_core::synthetic::{
    gen_corpus, indicator_basis, indicators_from_basis, write_fixture, Fixture, IndicatorParams, Preset,
    SynthParams, DEFAULT_SEED, PLANTED_COUPLING,
};
use madpfi_core::ErrorKind;

fn paper_shape() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| madpfi_core::synthetic::generate(Preset::PaperShape, DEFAULT_SEED).unwrap())
}

fn spread_corpus(seed: u64) -> madpfi_core::corpus::Corpus {
    let mut params = SynthParams::uniform(30, 20, 100, 2000, 0.5, seed);
    params.reuse = (0..30).map(|i| 0.05 + 0.03 * i as f64).collect();
    gen_corpus(&params).unwrap()
}

#[test]
fn noiseless_linear_coupling_gives_perfect_negative_correlation() {
    let corpus = spread_corpus(3);
    let params = IndicatorParams {
        coupling: -2.0,
        noise_sd: 0.0,
        region_sd: 0.0,
        country_sd: 0.0,
        windows: WindowSpec::Full,
        ..IndicatorParams::default()
    };
    let basis = indicator_basis(&corpus, &params).unwrap();
    let indicators = indicators_from_basis(&basis, &params, 1);
    let records = windowed_diversity(&corpus, TopK::new(90).unwrap(), &WindowSpec::Full).unwrap();
    let sweep = correlation_sweep(&records, &indicators, &[90], 0.95, DiversityScale::Log).unwrap();
    assert!((sweep.results[0].r + 1.0).abs() < 1e-12, "r = {}", sweep.results[0].r);
    let linear = correlation_sweep(&records, &indicators, &[90], 0.95, DiversityScale::Linear).unwrap();
    assert!(linear.results[0].r > -1.0 + 1e-6);
}

#[test]
fn planted_slope_is_recovered_on_small_fixture() {
    let corpus = spread_corpus(4);
    let params = IndicatorParams {
        coupling: -20.0,
        noise_sd: 1.0,
        region_sd: 2.0,
        country_sd: 0.0,
        windows: WindowSpec::Full,
        ..IndicatorParams::default()
    };
    let basis = indicator_basis(&corpus, &params).unwrap();
    let indicators = indicators_from_basis(&basis, &params, 9);
    let records = windowed_diversity(&corpus, TopK::new(90).unwrap(), &WindowSpec::Full).unwrap();
    let (frame, report) = join_frame(&records, &indicators).unwrap();
    assert_eq!(report.rows, 30);
    let spec = LmmSpec::model(1, Grouping::Region, Method::Reml).unwrap();
    let result = fit_model(&frame, "Model 1", &spec);
    let fit = result.fit.expect("fits");
    assert!((fit.beta[1] + 20.0).abs() < 3.0 * fit.se[1], "{} ± {}", fit.beta[1], fit.se[1]);
}

#[test]
fn paper_shape_join_drops_eight_countries() {
    let fx = paper_shape();
    let records = windowed_diversity(&fx.corpus, TopK::new(90).unwrap(), &WindowSpec::Full).unwrap();
    assert_eq!(records.len(), 88);
    let (frame, report) = join_frame(&records, &fx.indicators).unwrap();
    assert_eq!(frame.len(), 80);
    assert_eq!(report.missing_pfi.len(), 8);
    assert_eq!(report.dropped(), 8);
    assert!(!report.panel);
}

#[test]
fn paper_shape_panel_with_full_indicators_has_616_rows() {
    let fx = paper_shape();
    let params = IndicatorParams {
        coupling: PLANTED_COUPLING,
        ..IndicatorParams::default()
    };
    let basis = indicator_basis(&fx.corpus, &params).unwrap();
    let indicators = indicators_from_basis(&basis, &params, 5);
    let records = windowed_diversity(&fx.corpus, TopK::new(90).unwrap(), &WindowSpec::Monthly).unwrap();
    let (frame, report) = join_frame(&records, &indicators).unwrap();
    assert_eq!(frame.len(), 616);
    assert_eq!(report.dropped(), 0);
    assert!(report.panel);
}

#[test]
fn paper_shape_default_report_recovers_negative_slope() {
    let fx = paper_shape();
    let tmp = tempfile::tempdir().unwrap();
    let files = write_fixture(fx, tmp.path().join("fixture")).unwrap();
    let config = PipelineConfig {
        snapshots: files.snapshots,
        indicators: Some(files.indicators),
        out: tmp.path().join("report"),
        ks: vec![10, 50, 90],
        ..PipelineConfig::default()
    };
    let outcome = run_report(&config).unwrap();
    assert!(outcome.success(), "{:?}", outcome.failure());
    assert!(outcome.manifest.synthetic);
    let m1 = &outcome.models[0];
    let fit = m1.fit.as_ref().unwrap();
    assert!(fit.beta[1] < 0.0 && fit.p_values[1] < 0.001);
    assert_eq!(fit.n, 80);
    assert!(outcome.correlations.iter().all(|c| c.r < 0.0));
    assert_eq!(outcome.survival[9], (10, 129));
    assert_eq!(outcome.survival[89], (90, 88));
    assert_eq!(outcome.survival[99], (100, 0));
    for f in ["survival.csv", "diversity_k10.csv", "diversity_k50.csv", "diversity_k90.csv",
              "subtopic_diversity_k90_l3.csv", "correlation.csv", "scatter.csv", "scatter.svg",
              "table1.txt", "models.json", "MANIFEST.json"] {
        assert!(config.out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(config.out.join("table1.txt")).unwrap();
    assert!(table.contains("Max VIF"));
}

#[test]
fn report_keeps_partial_outputs_when_indicators_are_missing() {
    let corpus = spread_corpus(6);
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    madpfi_core::corpus::write_corpus(&corpus, &snaps).unwrap();
    let config = PipelineConfig {
        snapshots: snaps,
        indicators: Some(tmp.path().join("absent.csv")),
        out: tmp.path().join("out"),
        ..PipelineConfig::default()
    };
    let outcome = run_report(&config).unwrap();
    assert!(!outcome.success());
    let (stage, kind, _) = outcome.failure().unwrap();
    assert_eq!((stage, kind), ("indicators", ErrorKind::Io));
    let status = |name: &str| outcome.manifest.stages.iter().find(|s| s.name == name).unwrap().status;
    assert_eq!(status("diversity"), StageStatus::Ok);
    assert_eq!(status("fit"), StageStatus::Skipped);
    assert!(config.out.join("diversity_k90.csv").exists());
    let manifest = fs::read_to_string(config.out.join("MANIFEST.json")).unwrap();
    assert!(manifest.contains("\"complete\": false"));
}

#[test]
fn minimal_fixture_fails_at_fit() {
    let fx = madpfi_core::synthetic::generate(Preset::Minimal, 1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let files = write_fixture(&fx, tmp.path()).unwrap();
    let config = PipelineConfig {
        snapshots: files.snapshots,
        indicators: Some(files.indicators),
        out: tmp.path().join("out"),
        ..PipelineConfig::default()
    };
    let outcome = run_report(&config).unwrap();
    let fit = outcome.manifest.stages.iter().find(|s| s.name == "fit").unwrap();
    assert_eq!(fit.status, StageStatus::Failed);
    assert_eq!(fit.kind, Some(ErrorKind::Computation));
    assert!(config.out.join("diversity_k10.csv").exists());
    assert!(config.out.join("subtopic_diversity_k90_l3.csv").exists());
}

#[test]
fn indicator_csv_round_trip_through_fixture() {
    let fx = madpfi_core::synthetic::generate(Preset::Minimal, 2).unwrap();
    let mut buf = Vec::new();
    write_indicators(&fx.indicators, &mut buf).unwrap();
    let back = madpfi_core::stats::read_indicators(buf.as_slice()).unwrap();
    assert_eq!(back.len(), fx.indicators.len());
    for (a, b) in back.iter().zip(&fx.indicators) {
        assert_eq!(a.country, b.country);
        assert_eq!(a.pfi, b.pfi);
    }
}
