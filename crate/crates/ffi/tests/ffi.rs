use std::ffi::{CStr, CString};
use std::ptr;

use gamc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gamc_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn small_config() -> GamcTrainConfig {
    GamcTrainConfig {
        epochs: 2,
        hidden_dim: 8,
        batch_size: 4,
        ..gamc_train_config_default()
    }
}

#[test]
fn defaults_match_library() {
    let c = gamc_train_config_default();
    assert_eq!((c.epochs, c.hidden_dim, c.decoder_layers), (80, 512, 1));
    assert_eq!((c.mask_rate, c.edge_drop_rate, c.alpha, c.lr), (0.5, 0.2, 0.1, 1e-3));
    assert_eq!(c.ablation, GAMC_ABLATION_FULL);
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(gamc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn synth_train_embed_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(gamc_synth_generate(6, 4, 3.0, 1, &mut ds), GamcStatus::Ok);
        assert_eq!(gamc_dataset_len(ds), 6);
        assert_eq!(gamc_dataset_feature_dim(ds), 4);
        let mut stats = GamcDatasetStats::default();
        assert_eq!(gamc_dataset_stats(ds, &mut stats), GamcStatus::Ok);
        assert_eq!((stats.news, stats.fake, stats.real), (6, 3, 3));
        assert_eq!(stats.edges, stats.nodes - stats.news);

        let data_path = CString::new(dir.path().join("d.ndjson").to_str().unwrap()).unwrap();
        assert_eq!(gamc_dataset_save(ds, data_path.as_ptr()), GamcStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(gamc_dataset_load(data_path.as_ptr(), &mut reloaded), GamcStatus::Ok);
        assert_eq!(gamc_dataset_len(reloaded), 6);

        let mut model = ptr::null_mut();
        assert_eq!(gamc_train(ds, &small_config(), &mut model), GamcStatus::Ok, "{}", last_error());
        assert_eq!(gamc_model_hidden_dim(model), 8);

        let mut emb = vec![0.0; 6 * 8];
        assert_eq!(gamc_embed(model, reloaded, emb.as_mut_ptr(), emb.len()), GamcStatus::Ok);
        assert!(emb.iter().all(|v| v.is_finite()));

        let model_path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(gamc_model_save(model, model_path.as_ptr()), GamcStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(gamc_model_load(model_path.as_ptr(), &mut loaded), GamcStatus::Ok);
        let mut again = vec![0.0; 6 * 8];
        assert_eq!(gamc_embed(loaded, ds, again.as_mut_ptr(), again.len()), GamcStatus::Ok);
        assert_eq!(emb, again);

        gamc_model_free(loaded);
        gamc_model_free(model);
        gamc_dataset_free(reloaded);
        gamc_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = CString::new("/nonexistent/gamc.ndjson").unwrap();
        assert_eq!(gamc_dataset_load(missing.as_ptr(), &mut ds), GamcStatus::DataError);
        assert!(ds.is_null());
        assert!(last_error().contains("/nonexistent/gamc.ndjson"));

        assert_eq!(gamc_dataset_load(ptr::null(), &mut ds), GamcStatus::InvalidArgument);
        assert_eq!(gamc_synth_generate(0, 4, 3.0, 1, &mut ds), GamcStatus::InvalidArgument);

        assert_eq!(gamc_synth_generate(4, 2, 3.0, 1, &mut ds), GamcStatus::Ok);
        assert!(last_error().is_empty());
        let mut model = ptr::null_mut();
        let bad = GamcTrainConfig {
            ablation: 9,
            ..small_config()
        };
        assert_eq!(gamc_train(ds, &bad, &mut model), GamcStatus::InvalidArgument);
        let bad = GamcTrainConfig {
            mask_rate: 2.0,
            ..small_config()
        };
        assert_eq!(gamc_train(ds, &bad, &mut model), GamcStatus::InvalidArgument);
        assert!(model.is_null());

        assert_eq!(gamc_train(ds, &small_config(), &mut model), GamcStatus::Ok);
        let mut short = vec![0.0; 3];
        assert_eq!(
            gamc_embed(model, ds, short.as_mut_ptr(), short.len()),
            GamcStatus::InvalidArgument
        );
        gamc_model_free(model);
        gamc_dataset_free(ds);
    }
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        gamc_dataset_free(ptr::null_mut());
        gamc_model_free(ptr::null_mut());
        assert_eq!(gamc_dataset_len(ptr::null()), 0);
        assert_eq!(gamc_model_hidden_dim(ptr::null()), 0);
        let mut stats = GamcDatasetStats::default();
        assert_eq!(gamc_dataset_stats(ptr::null(), &mut stats), GamcStatus::InvalidArgument);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gamc.h")).unwrap();
    for name in [
        "gamc_dataset_load",
        "gamc_dataset_save",
        "gamc_dataset_free",
        "gamc_dataset_len",
        "gamc_dataset_feature_dim",
        "gamc_dataset_stats",
        "gamc_synth_generate",
        "gamc_train_config_default",
        "gamc_train",
        "gamc_model_load",
        "gamc_model_save",
        "gamc_model_free",
        "gamc_model_hidden_dim",
        "gamc_embed",
        "gamc_last_error_message",
        "gamc_version",
        "typedef struct GamcDataset GamcDataset;",
        "GAMC_STATUS_PANIC = 4",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
