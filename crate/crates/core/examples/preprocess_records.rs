//! Imputation, outlier clipping and standardization fit on training rows
//! only, then applied to the whole table.

use deeprep::preprocess::{apply_standardize, fit_standardize, make_folds, ImputeStats, OutlierBounds};
use deeprep::synthetic::mixed_records;

fn main() -> deeprep::Result<()> {
    let ds = mixed_records(200, 0.1, 7)?;
    let plan = make_folds(ds.n(), 5, 7)?;
    let fold = &plan.folds[0];
    println!(
        "fold 1: {} train / {} validation / {} test rows",
        fold.train.len(),
        fold.validation.len(),
        fold.test.len()
    );

    println!("missing cells before: {}", ds.missing_count());
    let fill = ImputeStats::fit(&ds, &fold.train)?;
    let ds = fill.apply(&ds);
    println!("missing cells after:  {} (fill values {:?})", ds.missing_count(), fill.numeric_fill);

    let bounds = OutlierBounds::fit(&ds, &fold.train, 3.0)?;
    let ds = bounds.apply(&ds);
    let stats = fit_standardize(&ds, &fold.train)?;
    let ds = apply_standardize(&ds, &stats)?;

    let train = ds.numeric.select_rows(&fold.train);
    let test = ds.numeric.select_rows(&fold.test);
    println!("train column means {:?}", train.col_means());
    println!("test column means  {:?}", test.col_means());
    Ok(())
}
