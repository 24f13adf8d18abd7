use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use acsp::datagen::{generate, DataKind, GenParams};
use acsp::planner::{prune_model, PruneConfig};
use acsp::toynet::{arch, train, ToyModel, TrainConfig};
use acsp_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = acsp_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string())
}

fn check(status: AcspStatus) {
    assert_eq!(status, AcspStatus::Ok, "{:?}", last_error());
}

fn blobs(n: usize, seed: u64) -> *mut AcspDataset {
    let mut ds = ptr::null_mut();
    check(unsafe { acsp_dataset_generate(AcspDataKind::Blobs as u32, n, 3, 2, seed, &mut ds) });
    ds
}

fn model(spec: &str, seed: u64) -> *mut AcspModel {
    let mut m = ptr::null_mut();
    check(unsafe { acsp_model_new(c(spec).as_ptr(), seed, &mut m) });
    m
}

fn quick_train() -> AcspTrainOptions {
    AcspTrainOptions {
        epochs: 12,
        ..acsp_train_options_default()
    }
}

fn no_finetune() -> AcspPruneOptions {
    AcspPruneOptions {
        ft_epochs: 0,
        ..acsp_prune_options_default()
    }
}

fn name(status: i32) -> String {
    unsafe { CStr::from_ptr(acsp_status_name(status)) }
        .to_str()
        .unwrap()
        .to_string()
}

#[test]
fn version_and_status_names() {
    let v = unsafe { CStr::from_ptr(acsp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert_eq!(name(AcspStatus::Ok as i32), "Ok");
    assert_eq!(name(AcspStatus::BufferTooSmall as i32), "BufferTooSmall");
    assert_eq!(name(99), "Unknown");
}

#[test]
fn generated_data_matches_the_library() {
    let ds = blobs(300, 4);
    let (mut len, mut classes) = (0, 0);
    unsafe {
        check(acsp_dataset_len(ds, &mut len));
        check(acsp_dataset_num_classes(ds, &mut classes));
    }
    assert_eq!((len, classes), (300, 3));
    assert!(last_error().is_none());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ds");
    check(unsafe { acsp_dataset_write(ds, c(path.to_str().unwrap()).as_ptr()) });
    let direct = generate(&GenParams {
        kind: DataKind::Blobs,
        n: 300,
        classes: 3,
        dims: 2,
        seed: 4,
    })
    .unwrap();
    assert_eq!(acsp::tensio::read_dataset(&path).unwrap(), direct);

    let mut back = ptr::null_mut();
    check(unsafe { acsp_dataset_read(c(path.to_str().unwrap()).as_ptr(), &mut back) });
    unsafe {
        check(acsp_dataset_len(back, &mut len));
        acsp_dataset_free(back);
        acsp_dataset_free(ds);
    }
    assert_eq!(len, 300);
}

#[test]
fn failures_set_a_status_and_message() {
    let mut ds = ptr::dangling_mut::<AcspDataset>();
    let status = unsafe { acsp_dataset_generate(7, 100, 3, 2, 0, &mut ds) };
    assert_eq!(status, AcspStatus::BadParams);
    assert!(ds.is_null(), "out-handle must be cleared on failure");
    assert!(last_error().unwrap().contains("unknown dataset kind 7"));

    let status = unsafe { acsp_dataset_generate(AcspDataKind::Rings as u32, 100, 1, 2, 0, &mut ds) };
    assert_eq!(status, AcspStatus::BadParams);

    let mut m = ptr::null_mut();
    let status = unsafe { acsp_model_new(c("mlp:2-").as_ptr(), 0, &mut m) };
    assert_eq!(status, AcspStatus::Parse);
    assert!(last_error().unwrap().contains("offset 6"), "{:?}", last_error());

    let status = unsafe { acsp_model_read(c("/nonexistent/x.model").as_ptr(), &mut m) };
    assert_eq!(status, AcspStatus::Io);

    // a later success clears the message
    unsafe { acsp_dataset_free(blobs(60, 0)) };
    assert!(last_error().is_none());
}

#[test]
fn null_and_invalid_arguments_are_rejected() {
    let mut len = 0;
    unsafe {
        assert_eq!(acsp_dataset_len(ptr::null(), &mut len), AcspStatus::NullArgument);
        assert!(last_error().unwrap().contains("data is NULL"));
        assert_eq!(
            acsp_dataset_generate(0, 90, 3, 2, 0, ptr::null_mut()),
            AcspStatus::NullArgument
        );
        let mut m = ptr::null_mut();
        assert_eq!(acsp_model_new(ptr::null(), 0, &mut m), AcspStatus::NullArgument);
        let bad = [0x66u8, 0xff, 0x00];
        assert_eq!(
            acsp_model_new(bad.as_ptr() as *const c_char, 0, &mut m),
            AcspStatus::InvalidUtf8
        );
        // freeing NULL is a no-op
        acsp_dataset_free(ptr::null_mut());
        acsp_model_free(ptr::null_mut());
        acsp_plan_free(ptr::null_mut());
    }
}

#[test]
fn buffers_report_their_required_length() {
    let m = model("mlp:2-6-5-3", 1);
    let mut len = 0;
    let mut ids = [0usize; 4];
    unsafe {
        assert_eq!(
            acsp_model_prunable_layers(m, ptr::null_mut(), 0, &mut len),
            AcspStatus::BufferTooSmall
        );
        assert_eq!(len, 2);
        check(acsp_model_prunable_layers(
            m,
            ids.as_mut_ptr(),
            ids.len(),
            &mut len,
        ));
        assert_eq!(&ids[..len], &[0, 2]);
        let mut n = 0;
        check(acsp_model_num_components(m, 2, &mut n));
        assert_eq!(n, 5);
        assert_eq!(acsp_model_num_components(m, 1, &mut n), AcspStatus::ShapeMismatch);
        acsp_model_free(m);
    }
}

#[test]
fn buffer_datasets_are_validated() {
    let xs = [0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    let mut ds = ptr::null_mut();
    unsafe {
        check(acsp_dataset_from_buffers(
            xs.as_ptr(),
            [0u32, 1, 0, 1].as_ptr(),
            4,
            2,
            &mut ds,
        ));
        let mut classes = 0;
        check(acsp_dataset_num_classes(ds, &mut classes));
        assert_eq!(classes, 2);
        acsp_dataset_free(ds);
        // class 1 missing
        let status = acsp_dataset_from_buffers(xs.as_ptr(), [0u32, 2, 0, 2].as_ptr(), 4, 2, &mut ds);
        assert_eq!(status, AcspStatus::Format);
        assert!(ds.is_null());
        let status = acsp_dataset_from_buffers(xs.as_ptr(), [0u32].as_ptr(), usize::MAX, 2, &mut ds);
        assert_eq!(status, AcspStatus::BadParams);
    }
}

#[test]
fn training_matches_the_library() {
    let ds = blobs(300, 2);
    let m = model("mlp:2-10-3", 5);
    let mut acc = 0.0;
    let mut flops = 0;
    unsafe {
        check(acsp_model_train(m, ds, &quick_train(), &mut acc));
        let mut again = 0.0;
        check(acsp_model_accuracy(m, ds, &mut again));
        assert_eq!(acc, again);
        check(acsp_model_flops(m, &mut flops));
    }
    assert_eq!(flops, 2 * (2 * 10 + 10 * 3));

    let a = arch::parse("mlp:2-10-3").unwrap();
    let data = generate(&GenParams {
        kind: DataKind::Blobs,
        n: 300,
        classes: 3,
        dims: 2,
        seed: 2,
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 12,
        ..TrainConfig::default()
    };
    let (direct, _) = train(&ToyModel::new(a.input, &a.layers, 5).unwrap(), &data, &cfg).unwrap();
    assert_eq!(direct.accuracy(&data).unwrap(), acc);

    let bad = AcspTrainOptions {
        lr: -1.0,
        ..quick_train()
    };
    unsafe {
        assert_eq!(
            acsp_model_train(m, ds, &bad, ptr::null_mut()),
            AcspStatus::BadParams
        );
        let mut after = 0.0;
        check(acsp_model_accuracy(m, ds, &mut after));
        assert_eq!(after, acc, "failed training must not touch the model");
        acsp_model_free(m);
        acsp_dataset_free(ds);
    }
}

struct Trained {
    data: *mut AcspDataset,
    model: *mut AcspModel,
}

impl Drop for Trained {
    fn drop(&mut self) {
        unsafe {
            acsp_model_free(self.model);
            acsp_dataset_free(self.data);
        }
    }
}

fn trained(spec: &str) -> Trained {
    let data = blobs(360, 9);
    let model = model(spec, 9);
    check(unsafe { acsp_model_train(model, data, &quick_train(), ptr::null_mut()) });
    Trained { data, model }
}

fn plan_entries(plan: *const AcspPlan) -> Vec<(usize, usize, Vec<usize>)> {
    let mut layers = 0;
    check(unsafe { acsp_plan_num_layers(plan, &mut layers) });
    (0..layers)
        .map(|i| {
            let (mut id, mut n, mut len) = (0, 0, 0);
            let status = unsafe { acsp_plan_layer(plan, i, &mut id, &mut n, ptr::null_mut(), 0, &mut len) };
            assert_eq!(status, AcspStatus::BufferTooSmall);
            let mut kept = vec![0usize; len];
            check(unsafe { acsp_plan_layer(plan, i, &mut id, &mut n, kept.as_mut_ptr(), len, &mut len) });
            (id, n, kept)
        })
        .collect()
}

#[test]
fn pruning_matches_the_library() {
    let t = trained("mlp:2-16-12-3");
    let (mut pruned, mut plan) = (ptr::null_mut(), ptr::null_mut());
    check(unsafe {
        acsp_prune(
            t.model,
            t.data,
            &acsp_prune_options_default(),
            &mut pruned,
            &mut plan,
        )
    });

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("base.model");
    let data_path = dir.path().join("d.ds");
    unsafe {
        check(acsp_model_write(
            t.model,
            c(model_path.to_str().unwrap()).as_ptr(),
        ));
        check(acsp_dataset_write(
            t.data,
            c(data_path.to_str().unwrap()).as_ptr(),
        ));
    }
    let base = acsp::tensio::read_model(&model_path).unwrap();
    let data = acsp::tensio::read_dataset(&data_path).unwrap();
    let outcome = prune_model(&base, &data, &PruneConfig::default()).unwrap();

    let entries = plan_entries(plan);
    let want: Vec<_> = outcome
        .plan()
        .layers
        .iter()
        .map(|e| (e.layer_id, e.n_components, e.kept_indices.clone()))
        .collect();
    assert_eq!(entries, want);
    let mut flops = 0;
    check(unsafe { acsp_model_flops(pruned, &mut flops) });
    assert_eq!(flops, outcome.flops_after as u64);

    let plan_path = dir.path().join("plan.json");
    let mut reread = ptr::null_mut();
    unsafe {
        check(acsp_plan_write(plan, c(plan_path.to_str().unwrap()).as_ptr()));
        check(acsp_plan_read(
            c(plan_path.to_str().unwrap()).as_ptr(),
            &mut reread,
        ));
    }
    assert_eq!(plan_entries(reread), entries);
    unsafe {
        acsp_plan_free(reread);
        acsp_plan_free(plan);
        acsp_model_free(pruned);
    }
}

#[test]
fn applying_a_plan_replays_pruning() {
    let t = trained("mlp:2-16-12-3");
    let (mut pruned, mut plan, mut replayed) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        check(acsp_prune(
            t.model,
            t.data,
            &no_finetune(),
            &mut pruned,
            &mut plan,
        ));
        check(acsp_plan_apply(t.model, plan, &mut replayed));
    }
    let dir = tempfile::tempdir().unwrap();
    let write = |m: *const AcspModel, name: &str| {
        let p = dir.path().join(name);
        check(unsafe { acsp_model_write(m, c(p.to_str().unwrap()).as_ptr()) });
        std::fs::read(p).unwrap()
    };
    assert_eq!(write(pruned, "a.model"), write(replayed, "b.model"));

    // the plan does not fit a differently shaped model
    let other = model("mlp:2-8-8-3", 0);
    let mut out = ptr::dangling_mut::<AcspModel>();
    assert_ne!(unsafe { acsp_plan_apply(other, plan, &mut out) }, AcspStatus::Ok);
    assert!(out.is_null());
    unsafe {
        acsp_model_free(other);
        acsp_model_free(replayed);
        acsp_model_free(pruned);
        acsp_plan_free(plan);
    }
}

#[test]
fn raw_activation_selection_matches_the_first_pruned_layer() {
    let t = trained("mlp:2-16-3");
    let (mut pruned, mut plan) = (ptr::null_mut(), ptr::null_mut());
    check(unsafe { acsp_prune(t.model, t.data, &no_finetune(), &mut pruned, &mut plan) });
    let (_, _, want) = plan_entries(plan).remove(0);

    let (mut len, mut n, mut p) = (0, 0, 0);
    let capture = AcspCapture::PostActivation as u32;
    let status = unsafe {
        acsp_model_capture(
            t.model,
            t.data,
            0,
            capture,
            ptr::null_mut(),
            0,
            &mut len,
            &mut n,
            &mut p,
        )
    };
    assert_eq!(status, AcspStatus::BufferTooSmall);
    assert_eq!((len, n, p), (360 * 16, 16, 1));
    let mut values = vec![0f32; len];
    let mut norms = vec![0f64; n];
    let mut labels_len = 0;
    unsafe {
        check(acsp_model_capture(
            t.model,
            t.data,
            0,
            capture,
            values.as_mut_ptr(),
            len,
            &mut len,
            &mut n,
            &mut p,
        ));
        check(acsp_model_component_norms(
            t.model,
            0,
            norms.as_mut_ptr(),
            n,
            &mut labels_len,
        ));
    }
    let data = generate(&GenParams {
        kind: DataKind::Blobs,
        n: 360,
        classes: 3,
        dims: 2,
        seed: 9,
    })
    .unwrap();
    let labels = data.labels();

    let mut kept = vec![0usize; n];
    let mut kept_len = 0;
    let opts = acsp_prune_options_default();
    check(unsafe {
        acsp_select_components(
            values.as_ptr(),
            labels.as_ptr(),
            360,
            n,
            p,
            norms.as_ptr(),
            &opts,
            kept.as_mut_ptr(),
            n,
            &mut kept_len,
        )
    });
    assert_eq!(&kept[..kept_len], &want[..]);

    // weighted mode needs norms, regular mode does not
    let status = unsafe {
        acsp_select_components(
            values.as_ptr(),
            labels.as_ptr(),
            360,
            n,
            p,
            ptr::null(),
            &opts,
            kept.as_mut_ptr(),
            n,
            &mut kept_len,
        )
    };
    assert_eq!(status, AcspStatus::NullArgument);
    let regular = AcspPruneOptions {
        selection: AcspSelection::Regular as u32,
        ..opts
    };
    check(unsafe {
        acsp_select_components(
            values.as_ptr(),
            labels.as_ptr(),
            360,
            n,
            p,
            ptr::null(),
            &regular,
            kept.as_mut_ptr(),
            n,
            &mut kept_len,
        )
    });
    assert_eq!(kept_len, want.len());

    let bad = AcspPruneOptions { selection: 5, ..opts };
    let status = unsafe {
        acsp_select_components(
            values.as_ptr(),
            labels.as_ptr(),
            360,
            n,
            p,
            norms.as_ptr(),
            &bad,
            kept.as_mut_ptr(),
            n,
            &mut kept_len,
        )
    };
    assert_eq!(status, AcspStatus::BadParams);
    unsafe {
        acsp_plan_free(plan);
        acsp_model_free(pruned);
    }
}

#[test]
fn selection_rejects_bad_activations() {
    let labels = [0u32, 1, 0, 1];
    let mut values = [0f32; 4 * 3];
    values[0] = f32::NAN;
    let mut kept = [0usize; 3];
    let mut len = 0;
    let opts = AcspPruneOptions {
        selection: AcspSelection::Regular as u32,
        ..acsp_prune_options_default()
    };
    let status = unsafe {
        acsp_select_components(
            values.as_ptr(),
            labels.as_ptr(),
            4,
            3,
            1,
            ptr::null(),
            &opts,
            kept.as_mut_ptr(),
            3,
            &mut len,
        )
    };
    assert_eq!(status, AcspStatus::NonFinite);
    assert!(last_error().unwrap().contains("non-finite"));

    // a class with a single sample has no variance, so everything is kept
    values[0] = 0.5;
    let status = unsafe {
        acsp_select_components(
            values.as_ptr(),
            [0u32, 1, 1, 1].as_ptr(),
            4,
            3,
            1,
            ptr::null(),
            &opts,
            kept.as_mut_ptr(),
            3,
            &mut len,
        )
    };
    check(status);
    assert_eq!(&kept[..len], &[0, 1, 2]);
}

#[test]
fn errors_are_per_thread() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { acsp_model_new(c("cnn:").as_ptr(), 0, &mut m) },
        AcspStatus::Parse
    );
    std::thread::spawn(|| {
        assert!(last_error().is_none());
        unsafe { acsp_dataset_free(blobs(60, 1)) };
    })
    .join()
    .unwrap();
    assert!(last_error().is_some());
}

fn exported_functions() -> Vec<String> {
    let src = include_str!("../src/lib.rs");
    let lines: Vec<&str> = src.lines().collect();
    lines
        .windows(2)
        .filter(|w| w[0].trim() == "#[no_mangle]")
        .map(|w| {
            let rest = w[1].split("fn ").nth(1).unwrap();
            rest[..rest.find('(').unwrap()].to_string()
        })
        .collect()
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/acsp.h")).unwrap();
    let exports = exported_functions();
    assert!(exports.len() >= 30, "{exports:?}");
    for f in &exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from acsp.h");
    }
    for t in [
        "AcspStatus",
        "AcspDataset",
        "AcspModel",
        "AcspPlan",
        "AcspPruneOptions",
    ] {
        assert!(header.contains(&format!("typedef struct {t} {t};")) || header.contains(&format!("}} {t};")));
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler found, skipping");
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"acsp.h\"\n\
         int main(void) {\n\
           AcspPruneOptions o = acsp_prune_options_default();\n\
           AcspDataset *d = 0;\n\
           AcspStatus s = acsp_dataset_generate(ACSP_DATA_KIND_BLOBS, 100, 2, 2, 0, &d);\n\
           acsp_dataset_free(d);\n\
           return (int)s + (int)o.degree - 2;\n\
         }\n",
    )
    .unwrap();
    for (lang, std) in [("c", "-std=c99"), ("c++", "-std=c++17")] {
        let out = Command::new(&cc)
            .args([
                "-fsyntax-only",
                "-Wall",
                "-Wextra",
                "-Werror",
                std,
                "-x",
                lang,
                "-I",
            ])
            .arg(&include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{lang}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
