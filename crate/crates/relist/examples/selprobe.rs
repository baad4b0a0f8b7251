use relist::annotator::load_annotated;
use relist::em::{load_model, AnyModel};
use std::path::Path;

fn main() {
    let corpus = load_annotated(Path::new("/tmp/bigrun3/annotated_train.jsonl")).unwrap();
    for name in ["model_relist0.json", "model_relist.json"] {
        let AnyModel::ReList(model) =
            load_model(Path::new(&format!("/tmp/bigrun3/{name}"))).unwrap()
        else {
            panic!("not a two-model bundle")
        };
        let mut null_mass = 0.0;
        let mut agree = 0usize;
        let mut total = 0usize;
        let mut confident = 0usize;
        let mut flips_to_null = 0usize;
        let mut flips_from_null = 0usize;
        for story in corpus.iter().take(400) {
            for i in 1..=story.story.sentences.len() {
                let post = model.posterior(
                    &story.silver.relationships,
                    story.story.context_before(i),
                    &story.story.sentences[i - 1],
                );
                let silver = story.silver.sentence_labels.0[i - 1].candidate_index();
                let argmax = post
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                null_mass += post[0];
                total += 1;
                if argmax == silver {
                    agree += 1;
                } else if argmax == 0 {
                    flips_to_null += 1;
                } else if silver == 0 {
                    flips_from_null += 1;
                }
                if post[argmax] > 0.9 {
                    confident += 1;
                }
            }
        }
        println!(
            "{name}: mean p(null) {:.3}, argmax==silver {:.3}, confident(>0.9) {:.3}, \
             rel->null {:.3}, null->rel {:.3}",
            null_mass / total as f64,
            agree as f64 / total as f64,
            confident as f64 / total as f64,
            flips_to_null as f64 / total as f64,
            flips_from_null as f64 / total as f64,
        );
    }
}
