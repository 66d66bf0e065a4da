//! End-to-end runs of the subcommands through `run`, on files in a temp dir.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Parser;
use extruder_thermal::reference;

use crate::config::ProjectConfig;
use crate::error::CliError;
use crate::{csvio, run, Cli};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("reference.toml", &ProjectConfig::reference().to_toml());
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Result<String, CliError> {
        let argv = std::iter::once("extruder").chain(args.iter().copied());
        run(&Cli::try_parse_from(argv).unwrap())
    }

    fn ok(&self, args: &[&str]) -> String {
        self.run(args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
    }

    /// Reference config with `edit` applied to its TOML table.
    fn config_with(&self, name: &str, edit: impl FnOnce(&mut toml::Table)) -> String {
        let mut table: toml::Table = ProjectConfig::reference().to_toml().parse().unwrap();
        edit(&mut table);
        self.write(name, &toml::to_string(&table).unwrap());
        self.arg(name)
    }
}

fn section<'a>(t: &'a mut toml::Table, key: &str) -> &'a mut toml::Table {
    t.get_mut(key).unwrap().as_table_mut().unwrap()
}

#[test]
fn shipped_reference_config_is_the_reference_barrel() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let cfg = ProjectConfig::parse_str(&text).unwrap();
    assert_eq!(cfg, ProjectConfig::reference());
    assert_eq!(cfg.spec().unwrap(), reference::setup());
    assert_eq!(cfg.observer.axial_groups, Some(7));
}

#[test]
fn build_reports_the_reference_dimensions() {
    let ws = Workspace::new();
    let out = ws.ok(&["build", "--config", &ws.arg("reference.toml")]);
    assert_eq!(out.lines().next().unwrap(), "states=210, inputs=5, outputs=14, stable=true");
    assert!(out.contains("metzler=true"));
}

#[test]
fn missing_key_is_named_with_its_path() {
    let ws = Workspace::new();
    let cfg = ws.config_with("bad.toml", |t| {
        section(t, "geometry").remove("inner_diameter_d1");
    });
    let err = ws.run(&["build", "--config", &cfg]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("geometry.inner_diameter_d1"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let ws = Workspace::new();
    let cfg = ws.config_with("bad.toml", |t| {
        section(t, "grid").insert("n_z".into(), toml::Value::Integer(3));
    });
    let err = ws.run(&["build", "--config", &cfg]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("n_z"), "{err}");
}

#[test]
fn too_few_radial_cells_is_a_config_error() {
    let ws = Workspace::new();
    let cfg = ws.config_with("bad.toml", |t| {
        section(t, "grid").insert("n_r".into(), toml::Value::Integer(2));
    });
    let err = ws.run(&["build", "--config", &cfg]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("grid.n_r"), "{err}");
}

#[test]
fn zones_are_numbered_from_one() {
    let ws = Workspace::new();
    let cfg = ws.config_with("bad.toml", |t| {
        let tapes = section(t, "geometry").get_mut("heating_tapes").unwrap().as_array_mut().unwrap();
        tapes[0].as_table_mut().unwrap().insert("zone".into(), toml::Value::Integer(0));
    });
    let err = ws.run(&["build", "--config", &cfg]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("heating_tapes[0].zone"), "{err}");
}

#[test]
fn overlays_replace_only_the_keys_they_set() {
    let ws = Workspace::new();
    ws.write("overlay.toml", "[materials.screw_conveyor]\nconductivity = 7.5\n");
    let loaded = crate::config::LoadedConfig::load(&[ws.path("reference.toml"), ws.path("overlay.toml")]).unwrap();
    let mut expected = ProjectConfig::reference();
    expected.materials.screw_conveyor.conductivity = 7.5;
    assert_eq!(loaded.config, expected);
}

#[test]
fn simulate_at_equilibrium_stays_put() {
    let ws = Workspace::new();
    let u = reference::constant_inputs(&[reference::AMBIENT; 4], 10.0, 500.0);
    csvio::write_series(&ws.path("u.csv"), &u).unwrap();
    ws.ok(&["simulate", "--config", &ws.arg("reference.toml"), "--input", &ws.arg("u.csv"), "--output", &ws.arg("y.csv")]);
    let y = csvio::read_series(&ws.path("y.csv")).unwrap();
    assert_eq!(y.len(), 51);
    assert_eq!(y.names().len(), 14);
    for n in y.names() {
        for v in y.channel(n).unwrap() {
            assert!((v - reference::AMBIENT).abs() < 1e-9, "{n}: {v}");
        }
    }
}

#[test]
fn bad_input_files_are_data_errors() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.write("empty.csv", "");
    ws.write("partial.csv", "time,T_h1,T_h2\n0,300,300\n");
    for input in ["empty.csv", "partial.csv", "absent.csv"] {
        let err = ws
            .run(&["simulate", "--config", &cfg, "--input", &ws.arg(input), "--output", &ws.arg("y.csv")])
            .unwrap_err();
        assert_eq!(err.exit_code(), 3, "{input}: {err}");
    }
}

#[test]
fn runs_are_byte_identical_and_carry_manifests() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    for k in 0..2 {
        let out = ws.arg(&format!("m{k}.csv"));
        ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--duration", "300", "--noise", "0.2", "--seed", "9", "--output", &out]);
    }
    assert_eq!(ws.read("m0.csv"), ws.read("m1.csv"));
    let m: serde_json::Value = serde_json::from_str(&ws.read("m0.csv.manifest.json")).unwrap();
    assert_eq!(m["command"], "generate");
    let digest = crate::manifest::sha256_hex(ws.read("m0.csv").as_bytes());
    assert_eq!(m["outputs"][0]["sha256"], digest.as_str());
    assert_eq!(m["config_files"][0]["sha256"], crate::manifest::sha256_hex(ws.read("reference.toml").as_bytes()).as_str());

    ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--duration", "300", "--noise", "0.2", "--seed", "10", "--output", &ws.arg("m2.csv")]);
    assert_ne!(ws.read("m0.csv"), ws.read("m2.csv"));
}

#[test]
fn resampling_by_dt_keeps_the_horizon() {
    let ws = Workspace::new();
    let u = reference::heat_up_inputs(10.0, 600.0);
    csvio::write_series(&ws.path("u.csv"), &u).unwrap();
    ws.ok(&["simulate", "--config", &ws.arg("reference.toml"), "--input", &ws.arg("u.csv"), "--output", &ws.arg("y.csv"), "--dt", "5"]);
    let y = csvio::read_series(&ws.path("y.csv")).unwrap();
    assert_eq!(y.len(), 121);
    assert_eq!(*y.time().last().unwrap(), 600.0);
}

#[test]
fn fit_recovers_a_perturbed_overlay() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--duration", "2000", "--output", &ws.arg("m.csv")]);
    let start = ws.config_with("start.toml", |t| {
        section(section(t, "materials"), "screw_conveyor").insert("conductivity".into(), toml::Value::Float(3.0));
        let fit = section(t, "fit");
        let p = |name: &str| {
            let mut e = toml::Table::new();
            e.insert("name".into(), toml::Value::String(name.into()));
            toml::Value::Table(e)
        };
        fit.insert("parameters".into(), toml::Value::Array(vec![p("lambda_s"), p("alpha_ht5")]));
    });
    let report = ws.ok(&["fit", "--config", &start, "--input", &ws.arg("m.csv"), "--output", &ws.arg("fit.toml")]);
    assert!(report.contains("lambda_s"), "{report}");
    assert!(ws.path("fit.toml.report.txt").exists());
    let fitted = crate::config::LoadedConfig::load(&[PathBuf::from(&start), ws.path("fit.toml")]).unwrap();
    let lambda = fitted.config.materials.screw_conveyor.conductivity;
    assert!((lambda - 5.0).abs() < 1e-4, "{lambda}");
    assert!((fitted.config.boundary.alpha_ht[4] - 360.0).abs() < 1e-3);
}

#[test]
fn fit_inputs_can_be_split_over_files() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    let u = reference::heat_up_inputs(10.0, 500.0);
    csvio::write_series(&ws.path("u.csv"), &u).unwrap();
    ws.ok(&["simulate", "--config", &cfg, "--input", &ws.arg("u.csv"), "--output", &ws.arg("y.csv")]);
    let report = ws.ok(&["fit", "--config", &cfg, "--input", &ws.arg("u.csv"), "--input", &ws.arg("y.csv"), "--output", &ws.arg("fit.toml")]);
    assert!(report.contains("zero_residual"), "{report}");

    let err = ws
        .run(&["fit", "--config", &cfg, "--input", &ws.arg("u.csv"), "--input", &ws.arg("u.csv"), "--output", &ws.arg("fit.toml")])
        .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn per_element_observer_is_refused() {
    let ws = Workspace::new();
    let cfg = ws.config_with("per_element.toml", |t| {
        section(t, "observer").remove("axial_groups");
    });
    let u = reference::constant_inputs(&[400.0; 4], 10.0, 100.0);
    csvio::write_series(&ws.path("u.csv"), &u).unwrap();
    let err = ws
        .run(&["observe", "--config", &cfg, "--input", &ws.arg("u.csv"), "--output", &ws.arg("q.csv")])
        .unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("not detectable"), "{err}");
}

#[test]
fn observe_writes_estimates_and_a_profile() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.ok(&["generate", "--config", &cfg, "--kind", "twin", "--duration", "600", "--output", &ws.arg("twin.csv")]);
    ws.ok(&["observe", "--config", &cfg, "--input", &ws.arg("twin.csv"), "--output", &ws.arg("q.csv"), "--snapshot-time", "300"]);
    let q = csvio::read_series(&ws.path("q.csv")).unwrap();
    assert_eq!(q.len(), 61);
    assert_eq!(q.names(), ["qa_1", "qa_2", "qa_3", "qa_4", "qa_5", "qa_6", "qa_7", "qr_1"]);
    let profile = ws.read("q.profile.csv");
    assert!(profile.starts_with("# t = 300\nlabel,x_start,x_end,q,flux_density\nqa_1,0,"), "{profile}");
    assert_eq!(profile.lines().count(), 2 + 8);
}

#[test]
fn observe_rejects_a_sample_period_mismatch() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--dt", "5", "--duration", "100", "--output", &ws.arg("m.csv")]);
    let err = ws
        .run(&["observe", "--config", &cfg, "--input", &ws.arg("m.csv"), "--output", &ws.arg("q.csv"), "--dt", "10"])
        .unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("dt = 10"), "{err}");
}

#[test]
fn observer_step_defaults_to_the_stream_period() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--dt", "5", "--duration", "100", "--output", &ws.arg("m.csv")]);
    ws.ok(&["observe", "--config", &cfg, "--input", &ws.arg("m.csv"), "--output", &ws.arg("q.csv")]);
    assert_eq!(csvio::read_series(&ws.path("q.csv")).unwrap().len(), 21);
    ws.write("one.csv", "time,T_h1,T_h2,T_h3,T_h4,T_0\n0,300,300,300,300,300\n");
    let err = ws
        .run(&["observe", "--config", &cfg, "--input", &ws.arg("one.csv"), "--output", &ws.arg("q.csv")])
        .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

/// Rows appended while the observer follows the file give the same
/// estimates as reading the finished file.
#[test]
fn follow_mode_matches_the_batch_run() {
    let ws = Workspace::new();
    let cfg = ws.arg("reference.toml");
    ws.ok(&["generate", "--config", &cfg, "--kind", "measured", "--duration", "200", "--noise", "0.1", "--output", &ws.arg("m.csv")]);
    ws.ok(&["observe", "--config", &cfg, "--input", &ws.arg("m.csv"), "--output", &ws.arg("batch.csv")]);

    let full = ws.read("m.csv");
    let live = ws.path("live.csv");
    std::fs::write(&live, "").unwrap();
    let writer = std::thread::spawn(move || {
        let mut f = std::fs::OpenOptions::new().append(true).open(&live).unwrap();
        for line in full.split_inclusive('\n') {
            f.write_all(line.as_bytes()).unwrap();
            f.flush().unwrap();
            std::thread::sleep(Duration::from_millis(5));
        }
    });
    ws.ok(&["observe", "--config", &cfg, "--input", &ws.arg("live.csv"), "--output", &ws.arg("follow.csv"), "--follow", "--idle-timeout", "1"]);
    writer.join().unwrap();
    assert_eq!(ws.read("follow.csv"), ws.read("batch.csv"));
}

#[test]
fn fe_compare_reports_every_sensor() {
    let ws = Workspace::new();
    let u = reference::heat_up_inputs(5.0, 500.0);
    csvio::write_series(&ws.path("u.csv"), &u).unwrap();
    ws.ok(&["fe-compare", "--config", &ws.arg("reference.toml"), "--input", &ws.arg("u.csv"), "--output", &ws.arg("cmp.csv"), "--refine", "2", "--traces", &ws.arg("traces.csv")]);
    let report = ws.read("cmp.csv");
    assert!(report.starts_with("sensor,max_abs_dev,rms_dev\nS0,"), "{report}");
    assert_eq!(report.lines().count(), 15);
    let traces = csvio::read_series(&ws.path("traces.csv")).unwrap();
    assert_eq!(traces.names().len(), 28);
}

#[test]
fn reference_config_needs_no_input_config() {
    let ws = Workspace::new();
    ws.ok(&["generate", "--kind", "reference-config", "--output", &ws.arg("ref.toml")]);
    assert_eq!(ws.read("ref.toml"), ProjectConfig::reference().to_toml());
    let err = ws.run(&["build"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
