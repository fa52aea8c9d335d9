mod common;

use cnf_rom::bank::Partition;
use cnf_rom::checkpoint::Checkpoint;
use cnf_rom::commands::{cmd_evaluate, cmd_exact, cmd_finetune, cmd_fom, cmd_pretrain, Overrides};
use cnf_rom::oracle::GridSolution;
use cnf_rom::Error;
use common::{smoke_config, write_config};
use sha2::{Digest, Sha256};

fn digest(values: &[f64]) -> Vec<u8> {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().to_vec()
}

fn pretrained(dir: &std::path::Path, epochs: usize) -> std::path::PathBuf {
    let cfg = smoke_config(dir, epochs);
    let p = write_config(dir, &cfg);
    cmd_pretrain(&p, None, &Overrides::default()).unwrap().checkpoint
}

#[test]
fn smoke_pretrain_lowers_data_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke_config(tmp.path(), 50);
    let p = write_config(tmp.path(), &cfg);
    let out = cmd_pretrain(&p, None, &Overrides::default()).unwrap();
    let rows = &out.loss_history.rows;
    assert_eq!(rows.len(), 50);
    assert!(rows.last().unwrap().data < rows[0].data);
    let csv = std::fs::read_to_string(&out.history).unwrap();
    assert!(csv.starts_with("epoch,total,l_data,l_pde,l_deriv,exact_mse,exact_rel,mean_rel_l2\n"));
    assert_eq!(csv.lines().count(), 51);
    let ck = Checkpoint::load(&out.checkpoint).unwrap();
    assert_eq!(ck.epoch, 50);
    assert_eq!(ck.config, cfg);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = pretrained(a.path(), 20);
    let cb = pretrained(b.path(), 20);
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(
        read(a.path(), "pretrain_history.csv"),
        read(b.path(), "pretrain_history.csv")
    );
    let (ka, kb) = (Checkpoint::load(&ca).unwrap(), Checkpoint::load(&cb).unwrap());
    assert_eq!(ka.bank, kb.bank);
    assert_eq!(ka.optimizer, kb.optimizer);
}

#[test]
fn different_seed_changes_history() {
    let a = tempfile::tempdir().unwrap();
    let cfg = smoke_config(a.path(), 3);
    let p = write_config(a.path(), &cfg);
    let h1 = cmd_pretrain(&p, None, &Overrides::default()).unwrap().loss_history;
    let ov = Overrides {
        seed: Some(7),
        ..Default::default()
    };
    let h2 = cmd_pretrain(&p, None, &ov).unwrap().loss_history;
    assert_ne!(h1.rows[0].total, h2.rows[0].total);
}

#[test]
fn missing_field_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "[train]\nlearning_rate = 0.001\n[params]\nmu_train = [20.0]\n").unwrap();
    let err = cmd_pretrain(&p, None, &Overrides::default()).unwrap_err();
    assert!(matches!(err, Error::ConfigParse { .. }));
    assert!(err.to_string().contains("epochs"), "{err}");
}

#[test]
fn resume_matches_uninterrupted_training() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let whole = pretrained(full.path(), 12);

    let mut cfg = smoke_config(split.path(), 5);
    let p = write_config(split.path(), &cfg);
    let first = cmd_pretrain(&p, None, &Overrides::default()).unwrap();
    cfg.train.epochs = 12;
    cfg.output.checkpoint = "resumed.ckpt".into();
    let p = write_config(split.path(), &cfg);
    let second = cmd_pretrain(&p, Some(&first.checkpoint), &Overrides::default()).unwrap();

    let a = Checkpoint::load(&whole).unwrap();
    let b = Checkpoint::load(&second.checkpoint).unwrap();
    assert_eq!(b.epoch, 12);
    assert_eq!(a.bank, b.bank);
    assert_eq!(a.optimizer, b.optimizer);
    let joined: Vec<_> = first
        .loss_history
        .rows
        .iter()
        .chain(&second.loss_history.rows)
        .cloned()
        .collect();
    let reference = cmd_pretrain(
        &write_config(full.path(), &smoke_config(full.path(), 12)),
        None,
        &Overrides::default(),
    )
    .unwrap()
    .loss_history;
    assert_eq!(joined, reference.rows);
}

#[test]
fn finetune_keeps_decoder_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = pretrained(tmp.path(), 5);
    let before = Checkpoint::load(&ckpt).unwrap();
    let ov = Overrides {
        steps: Some(5),
        ..Default::default()
    };
    let out = cmd_finetune(&ckpt, 15.0, None, &ov).unwrap();
    assert!(out.checkpoint.ends_with("finetune_mu15.ckpt"));
    let after = Checkpoint::load(&out.checkpoint).unwrap();
    for part in [Partition::Psi, Partition::Xi] {
        assert_eq!(
            digest(&before.bank.partition_values(part)),
            digest(&after.bank.partition_values(part)),
            "{part:?}"
        );
    }
    assert_ne!(
        before.bank.partition_values(Partition::Theta),
        after.bank.partition_values(Partition::Theta)
    );
    assert_eq!(after.bank.beta0_mus(), &[20.0, 15.0]);
}

#[test]
fn finetune_lowers_objective_at_mu_15() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = pretrained(tmp.path(), 100);
    let ov = Overrides {
        steps: Some(100),
        ..Default::default()
    };
    let h = cmd_finetune(&ckpt, 15.0, None, &ov).unwrap().loss_history;
    let (first, last) = (&h.rows[0], h.rows.last().unwrap());
    assert_eq!(h.rows.len(), 100);
    assert!(last.total < first.total, "{} -> {}", first.total, last.total);
    assert!(last.mean_rel_l2 < first.mean_rel_l2);
}

#[test]
fn zero_finetune_steps_leave_bank_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = pretrained(tmp.path(), 3);
    let ov = Overrides {
        steps: Some(0),
        ..Default::default()
    };
    let out = cmd_finetune(&ckpt, 20.0, None, &ov).unwrap();
    let a = Checkpoint::load(&ckpt).unwrap();
    let b = Checkpoint::load(&out.checkpoint).unwrap();
    assert_eq!(a.bank, b.bank);
    assert!(out.loss_history.rows.is_empty());
}

#[test]
fn finetune_rejects_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = pretrained(tmp.path(), 1);
    let ov = Overrides::default();
    assert!(matches!(
        cmd_finetune(&ckpt, 0.0, None, &ov),
        Err(Error::NonPositiveMu(_))
    ));
    assert!(matches!(
        cmd_finetune(&ckpt, -3.0, None, &ov),
        Err(Error::NonPositiveMu(_))
    ));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
    let old = tmp.path().join("old.ckpt");
    std::fs::write(&old, &bytes).unwrap();
    assert!(matches!(
        cmd_finetune(&old, 15.0, None, &ov),
        Err(Error::MigrationRequired { .. })
    ));
}

#[test]
fn evaluation_covers_every_mu_and_sizes_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = pretrained(tmp.path(), 2);
    let out = cmd_evaluate(&ckpt, None, Some(1.25), &Overrides::default()).unwrap();
    let mus: Vec<f64> = out.report.rows.iter().map(|r| r.mu).collect();
    assert_eq!(mus, vec![15.0, 20.0]);
    assert!(out.report.rows.iter().all(|r| r.rel_l2_forecast.is_some()));
    assert!(out.report.row(20.0).unwrap().in_training_set);
    assert!(!out.report.row(15.0).unwrap().in_training_set);
    assert_eq!(out.heatmaps.len(), 2);
    let csv = std::fs::read_to_string(&out.heatmaps[0]).unwrap();
    // 20 intervals on [0, 1] plus 5 forecast steps to 1.25, 16 nodes each
    assert_eq!(csv.lines().count(), 1 + 16 * 26);
    let report = std::fs::read_to_string(&out.report_path).unwrap();
    assert_eq!(report.lines().count(), 3);

    let ov = Overrides {
        nx: Some(8),
        nt: Some(10),
        ..Default::default()
    };
    let out = cmd_evaluate(&ckpt, Some(&[30.0]), None, &ov).unwrap();
    assert_eq!(out.report.rows.len(), 1);
    assert!(out.report.rows[0].rel_l2_forecast.is_none());
    assert_eq!(out.report.heatmaps[0].xs.len(), 8);
    assert_eq!(out.report.heatmaps[0].times.len(), 11);
    assert!(matches!(
        cmd_evaluate(&ckpt, Some(&[-1.0]), None, &ov),
        Err(Error::NonPositiveMu(_))
    ));
}

#[test]
fn fom_and_exact_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let p = cmd_exact(20.0, 9, 4, 1.0, tmp.path()).unwrap();
    let g = GridSolution::read_csv(&p).unwrap();
    assert_eq!(g, GridSolution::exact(20.0, 9, 4, 1.0));
    let (p, err) = cmd_fom(20.0, 33, 40, 1.0, tmp.path()).unwrap();
    assert!(p.ends_with("fom_mu20.csv"));
    assert!(err > 0.0 && err < 0.1, "{err}");
    assert!(cmd_exact(0.0, 9, 4, 1.0, tmp.path()).is_err());
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = cnf_rom::config::RunConfig::load(&root.join("desk.toml")).unwrap();
    assert_eq!((desk.grid.nx, desk.grid.nt), (32, 50));
    assert_eq!(desk.all_mus().len(), 13);
    let smoke = cnf_rom::config::RunConfig::load(&root.join("smoke.toml")).unwrap();
    assert_eq!(smoke.params.mu_train, vec![20.0]);
}
