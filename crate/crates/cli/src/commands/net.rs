use std::io::Write;

use funcgrasp::affordance::load_object;
use funcgrasp::dataset::{read_record_file, write_record_file};
use funcgrasp::net::{load_checkpoint, save_checkpoint, train as train_net, TrainSettings, TrainingSet};
use funcgrasp::pipeline::sample_records;
use funcgrasp::quality::passes;

use super::{open_config, open_hand, open_objects};
use crate::{read_text, CliError, CliResult, SampleArgs, TrainArgs};

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let hand = open_hand(&args.hand)?;
    let settings = match &args.settings {
        Some(p) => TrainSettings::from_toml_str(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => TrainSettings::default(),
    };
    let file = read_record_file(&args.dataset, false)?;
    if file.header.hand_id != hand.name {
        return Err(CliError::Input(format!(
            "{} holds grasps for hand {:?}, not {:?}",
            args.dataset.display(),
            file.header.hand_id,
            hand.name
        )));
    }
    let objects = open_objects(&args.objects)?;
    let data = TrainingSet {
        records: &file.records,
        objects: &objects,
    };
    let (net, curves) = train_net(&hand, &data, &settings)?;
    save_checkpoint(&args.checkpoint, &net)?;
    let curves_path = args
        .curves
        .clone()
        .unwrap_or_else(|| args.checkpoint.with_extension("loss.csv"));
    curves.write_csv(std::io::BufWriter::new(std::fs::File::create(&curves_path)?))?;
    writeln!(
        out,
        "trained on {} records for {} epochs; final loss_rec {:.3e}, loss_kld {:.3e}",
        file.records.len(),
        settings.epochs,
        curves.loss_rec.last().copied().unwrap_or(f64::NAN),
        curves.loss_kld.last().copied().unwrap_or(f64::NAN)
    )?;
    writeln!(out, "wrote {} and {}", args.checkpoint.display(), curves_path.display())?;
    Ok(())
}

pub fn sample(args: &SampleArgs, out: &mut dyn Write) -> CliResult<()> {
    let hand = open_hand(&args.hand)?;
    let net = load_checkpoint(&args.checkpoint)?;
    net.check_hand(&hand)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.checkpoint.display())))?;
    let config = open_config(args.config.as_deref())?;
    let mut obj = load_object(&args.object, &args.object.with_extension("json"))?;
    if let Some(s) = args.scale {
        obj = obj.rescaled(s)?;
    }
    let records = sample_records(&net, &hand, &obj, args.n, args.seed, &config)?;
    write_record_file(&args.out, &hand.name, &records)?;
    let pass = records.iter().filter(|r| passes(&r.metrics, &config.quality.thresholds)).count();
    writeln!(
        out,
        "wrote {} sampled grasps for {} (scale {:.4}) to {}; {} pass the filter",
        records.len(),
        obj.id,
        obj.scale,
        args.out.display(),
        pass
    )?;
    Ok(())
}
