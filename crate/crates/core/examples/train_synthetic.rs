//! Trains the desk model on the synthetic corpus: `train_synthetic [epochs] [sea|plain] [per_class]`.

use std::time::Instant;

use mrfe_core::data::make_synthetic_corpus;
use mrfe_core::eece::EmotionLexicon;
use mrfe_core::model::ModelConfig;
use mrfe_core::train::{split, train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let sea = std::env::args().nth(2).map(|a| a == "sea").unwrap_or(true);
    let n: usize = std::env::args().nth(3).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let corpus = make_synthetic_corpus(n, 2, 7).unwrap();
    let tcfg = TrainConfig { epochs, ..TrainConfig::default() };
    let (tr, dev, te) = split(&corpus, tcfg.ratios, tcfg.seed).unwrap();
    let cfg = ModelConfig { use_sea: sea, ..ModelConfig::default() };
    let t = Instant::now();
    let out = train::<f32>(&cfg, &tcfg, &tr, &dev, &EmotionLexicon::default(), None).unwrap();
    println!("{:?} in {:?}", out.augmentation, t.elapsed());
    for h in &out.history {
        println!("{h:?}");
    }
    let correct = te.samples.iter().filter(|s| out.model.predict_text(&s.text).unwrap().class == s.label).count();
    println!("test acc {}", correct as f64 / te.len() as f64);
}
