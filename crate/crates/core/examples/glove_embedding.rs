//! GloVe vectors for categorical levels, learned from within-record
//! co-occurrence, written to and read back from a `.dipe` file.

use deeprep::dataio::{load_embedding, save_embedding};
use deeprep::embed::{build_cooccurrence, embed_dataset, embedded_names, train_glove, GloveConfig};
use deeprep::preprocess::impute;
use deeprep::synthetic::mixed_records;

fn main() -> deeprep::Result<()> {
    let ds = impute(&mixed_records(300, 0.0, 3)?)?;
    let cooc = build_cooccurrence(&ds)?;
    println!("vocabulary: {} tokens", cooc.len());

    let cfg = GloveConfig { epochs: 200, ..Default::default() };
    let table = train_glove(&cooc, 4, &cfg)?;
    println!(
        "weighted loss {:.4} -> {:.4}",
        table.history[0],
        table.history.last().unwrap()
    );
    for (i, tok) in table.vocabulary.iter().enumerate() {
        let v: Vec<String> = table.vector(i).iter().map(|x| format!("{x:+.3}")).collect();
        println!("  {}={}: [{}]", tok.column, tok.level, v.join(", "));
    }

    let path = std::env::temp_dir().join("glove_example.dipe");
    save_embedding(&table, &path)?;
    assert_eq!(load_embedding(&path)?, table);

    let x = embed_dataset(&ds, &table);
    println!("embedded columns: {:?}", embedded_names(&ds, table.dim));
    println!("embedded matrix: {} x {}", x.rows(), x.cols());
    Ok(())
}
