use std::fmt::Write as _;
use std::fs;

use log::info;
use usvsthem_core::aggregate::Split;
use usvsthem_core::embedviz::{emit_figure_data, tsne, FigureStyle};
use usvsthem_model::checkpoint::load;
use usvsthem_model::export_all_hidden;

use super::learn::{run_dir, splits};
use super::{require, Context};
use crate::error::Result;
use crate::manifest::Recorder;

fn style_name(s: FigureStyle) -> &'static str {
    match s {
        FigureStyle::Scale => "scale",
        FigureStyle::Emotion => "emotion",
        FigureStyle::Group => "group",
    }
}

/// t-SNE of every layer of the chosen checkpoints, one figure per layer and
/// colouring style.
pub fn embed(ctx: &Context) -> Result<Recorder> {
    let mut rec = ctx.recorder();
    let e = &ctx.cfg.embed;
    let [train, dev, test] = splits(ctx, &mut rec)?;
    let mut comments = match e.split {
        Split::Train => train,
        Split::Dev => dev,
        Split::Test => test,
    };
    if let Some(k) = e.max_points {
        comments.truncate(k);
    }
    e.tsne.validate(comments.len())?;
    let seed = ctx.cfg.model_seed();
    let root = ctx.dir("embed")?;
    for &setup in &e.setups {
        let ckpt = require(&run_dir(&ctx.out, e.main, setup, seed).join("model.ckpt"), "run `train` first")?;
        rec.input(&ckpt);
        let model = load(&ckpt)?;
        let dir = root.join(e.main.to_string()).join(setup.as_str());
        fs::create_dir_all(&dir)?;
        let mut kl = String::from("layer,iterations,final_kl\n");
        for m in export_all_hidden(&model, &comments)? {
            m.write_csv(&dir.join(format!("hidden_{}.csv", m.tag)))?;
            let res = tsne(&m.rows, &e.tsne)?;
            let _ = writeln!(kl, "{},{},{}", m.tag, e.tsne.iterations, res.kl_trace.last().copied().unwrap_or(f64::NAN));
            for &style in &e.styles {
                emit_figure_data(&dir.join(style_name(style)), &m.tag, &res.embedding, &m.labels, style)?;
            }
            info!("{} {setup} layer {}: {} points embedded", e.main, m.tag, m.rows.len());
        }
        fs::write(dir.join("tsne.csv"), kl)?;
    }
    rec.output(root);
    Ok(rec)
}
