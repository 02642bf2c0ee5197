//! Post-hoc checks of finished slices. These re-run everything from the
//! slice record alone, bypassing the engine's session and cache.

use crate::criterion::{instrument, render_instrumented};
use crate::engine::{all_windows, EngineConfig, EngineError, Instantiation};
use crate::exec::{evaluate, Candidate, ExecOptions, TestSuite};
use crate::oracle::Oracle;
use crate::source::{DeletionMask, LineRef, Program, SliceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub env: String,
    pub test: usize,
    pub detail: String,
}

pub struct Verifier<'a> {
    pub program: &'a Program,
    pub suite: &'a TestSuite,
    pub oracle: &'a Oracle,
    pub cfg: &'a EngineConfig,
}

impl Verifier<'_> {
    fn opts(&self) -> ExecOptions {
        ExecOptions { marker: self.cfg.marker.clone(), ..Default::default() }
    }

    /// Environments and tests where the candidate under `mask` fails to
    /// reproduce the oracle.
    pub fn mismatches(
        &self,
        record: &SliceRecord,
        inst: &Instantiation,
        mask: &DeletionMask,
        stop_at_first: bool,
    ) -> Result<Vec<Violation>, EngineError> {
        let mut out = Vec::new();
        for env in &inst.envs {
            let tracker = instrument(self.program, &record.criterion, &env.tracker_template, &self.cfg.marker)?;
            let candidate = Candidate::new(render_instrumented(self.program, mask, &tracker)?);
            for (test, o) in evaluate(env, &candidate, self.suite, &self.opts()).iter().enumerate() {
                if !self.oracle.matches(&env.id, test, o, self.cfg.exit_code_policy)? {
                    out.push(Violation { env: env.id.clone(), test, detail: format!("{:?} {:?}", o.kind, o.tracked) });
                    if stop_at_first {
                        return Ok(out);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Re-evaluates the slice everywhere; empty means sound.
    pub fn soundness(&self, record: &SliceRecord, inst: &Instantiation) -> Result<Vec<Violation>, EngineError> {
        if !record.check_partition(self.program) {
            return Ok(vec![Violation {
                env: inst.id.clone(),
                test: 0,
                detail: "retained/deleted do not partition the program".into(),
            }]);
        }
        self.mismatches(record, inst, &record.mask(), false)
    }

    /// Every remaining window of 1..=max_window lines whose deletion would
    /// still be accepted; empty means the slice is a fixpoint.
    pub fn deletable_windows(
        &self,
        record: &SliceRecord,
        inst: &Instantiation,
    ) -> Result<Vec<Vec<LineRef>>, EngineError> {
        let mask = record.mask();
        let mut found = Vec::new();
        for w in all_windows(self.program, &mask, self.cfg.max_window) {
            let candidate = mask.with(w.iter().cloned());
            if self.mismatches(record, inst, &candidate, true)?.is_empty() {
                found.push(w);
            }
        }
        Ok(found)
    }
}
