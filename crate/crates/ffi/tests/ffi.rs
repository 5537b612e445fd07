use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rantwin::anomaly::FeatureStats;
use rantwin::mlp::MlpModel;
use rantwin_ffi::*;

fn write_artifacts(dir: &Path) -> (PathBuf, PathBuf) {
    let model = dir.join("model.txt");
    let stats = dir.join("stats.csv");
    MlpModel::init(&[16, 16], 5).unwrap().save(&model).unwrap();
    FeatureStats::identity().save(&stats).unwrap();
    (model, stats)
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = rantwin_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn sim_steps_and_reports_features() {
    let cfg = CString::new("n_ues = 5\nseed = 3\n").unwrap();
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(rantwin_sim_new(cfg.as_ptr(), &mut sim), RantwinStatus::Ok);
        let mut n = 0;
        assert_eq!(rantwin_sim_n_ues(sim, &mut n), RantwinStatus::Ok);
        assert_eq!(n, 5);

        let mut x = [0.0; RANTWIN_N_FEATURES];
        assert_eq!(rantwin_sim_ue_features(sim, 0, x.as_mut_ptr()), RantwinStatus::InvalidArgument);

        let mut summary = RantwinTickSummary::default();
        for t in 1..=3 {
            assert_eq!(rantwin_sim_step(sim, &mut summary), RantwinStatus::Ok);
            assert_eq!(summary.tick, t);
        }
        assert_eq!(rantwin_sim_ue_features(sim, 4, x.as_mut_ptr()), RantwinStatus::Ok);
        assert!(x.iter().all(|v| v.is_finite()));
        assert_eq!(rantwin_sim_ue_features(sim, 99, x.as_mut_ptr()), RantwinStatus::InvalidArgument);
        assert!(last_error().contains("99"));

        assert_eq!(rantwin_sim_inject_fault(sim, 1, 3, -15.0, 0.0, 10), RantwinStatus::Ok);
        assert_eq!(rantwin_sim_step(sim, &mut summary), RantwinStatus::Ok);
        assert_eq!(summary.faulted_ues, 1);
        assert_eq!(rantwin_sim_inject_fault(sim, 1, 0, -15.0, 0.0, 10), RantwinStatus::InvalidArgument);
        rantwin_sim_free(sim);
    }
}

#[test]
fn bad_config_is_invalid_argument() {
    let cfg = CString::new("n_ues = 0\n").unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { rantwin_sim_new(cfg.as_ptr(), &mut sim) };
    assert_eq!(status, RantwinStatus::InvalidArgument);
    assert!(sim.is_null());
    assert!(last_error().contains("n_ues"));
}

#[test]
fn model_and_stats_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (model_path, stats_path) = write_artifacts(dir.path());
    let (mut model, mut stats) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(rantwin_model_load(c_path(&model_path).as_ptr(), &mut model), RantwinStatus::Ok);
        assert_eq!(rantwin_stats_load(c_path(&stats_path).as_ptr(), &mut stats), RantwinStatus::Ok);
        let mut x = [1.0, -2.0, 0.5, 7.0, 1.2, 0.3, 0.1, 2.0];
        let before = x;
        assert_eq!(rantwin_stats_standardize(stats, x.as_ptr(), x.as_mut_ptr()), RantwinStatus::Ok);
        assert_eq!(x, before);
        let mut probs = [0.0; RANTWIN_N_CLASSES];
        let mut class = 9u8;
        assert_eq!(rantwin_model_predict(model, x.as_ptr(), probs.as_mut_ptr(), &mut class), RantwinStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(class < 4);
        let expected = MlpModel::load(&model_path).unwrap().predict(&x).unwrap();
        assert_eq!(class, expected.code());
        // probabilities are optional
        assert_eq!(rantwin_model_predict(model, x.as_ptr(), ptr::null_mut(), &mut class), RantwinStatus::Ok);
        assert_eq!(rantwin_model_predict(model, ptr::null(), ptr::null_mut(), &mut class), RantwinStatus::NullPointer);
        rantwin_model_free(model);
        rantwin_stats_free(stats);
    }
}

#[test]
fn load_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(rantwin_model_load(ptr::null(), &mut model), RantwinStatus::NullPointer);
        let missing = c_path(&dir.path().join("nope.txt"));
        assert_eq!(rantwin_model_load(missing.as_ptr(), &mut model), RantwinStatus::Io);
        let garbage = dir.path().join("garbage.txt");
        std::fs::write(&garbage, "not a model\n").unwrap();
        assert_eq!(rantwin_model_load(c_path(&garbage).as_ptr(), &mut model), RantwinStatus::InvalidArgument);
        let wide = dir.path().join("wide.txt");
        let mut nine = MlpModel::zeros(&[3]).unwrap();
        nine.layers[0].n_in = 9;
        nine.layers[0].weights = vec![0.0; 27];
        nine.save(&wide).unwrap();
        assert_eq!(rantwin_model_load(c_path(&wide).as_ptr(), &mut model), RantwinStatus::InvalidArgument);
        assert!(last_error().contains("input dimension 9"));
        assert!(model.is_null());
        // freeing null is a no-op
        rantwin_model_free(ptr::null_mut());
        rantwin_stats_free(ptr::null_mut());
        rantwin_sim_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(rantwin_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rantwin.h")).unwrap();
    for name in [
        "rantwin_sim_new",
        "rantwin_sim_step",
        "rantwin_sim_free",
        "rantwin_model_load",
        "rantwin_model_predict",
        "rantwin_stats_standardize",
        "rantwin_last_error",
        "typedef struct RantwinSim RantwinSim;",
        "RANTWIN_STATUS_IO = 3",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compile the C smoke program against the generated header and the static
/// library, then run it.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("librantwin_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let (model, stats) = write_artifacts(dir.path());
    let out = Command::new(&bin).arg(&model).arg(&stats).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "smoke failed: {stdout} {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("tick 5"), "{stdout}");
}

fn which_cc() -> Result<String, ()> {
    for cc in [std::env::var("CC").unwrap_or_default(), "cc".into(), "gcc".into(), "clang".into()] {
        if !cc.is_empty() && Command::new(&cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}
