//! Builds a two-Bob mirror game and reports the seven twin conditions for
//! a hand-made assignment, plus the chain-rule split of one cross term.

use mirrorwyner::harness::reference_instance;
use mirrorwyner::mirror_game::{evaluate_conditions, objective_decompose, MirrorGameInstance, TwinAssignment};
use mirrorwyner::prob::PrivacyMapping;

fn main() -> mirrorwyner::Result<()> {
    let inst = MirrorGameInstance::new(reference_instance())?;
    let asg = TwinAssignment {
        original: vec![PrivacyMapping::bsc(0.25)?, PrivacyMapping::bsc(0.25)?],
        // each twin is a noisy copy of the Bob's own X
        virtual_: vec![PrivacyMapping::bsc(0.3)?, PrivacyMapping::bsc(0.3)?],
    };
    let report = evaluate_conditions(&inst, &asg)?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(mirrorwyner::mirror_game::ConditionReport::CSV_HEADER)?;
    for rec in report.csv_records() {
        out.write_record(&rec)?;
    }
    out.flush()?;

    let t = objective_decompose(&inst, &asg, 0, 1)?;
    println!(
        "I(X_0; Y_tot_1) = {:.6} = {:.6} + {:.6}",
        t.direct, t.i_xo, t.i_xv_given_o
    );
    Ok(())
}
