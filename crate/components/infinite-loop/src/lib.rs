// SPDX-License-Identifier: Apache-2.0

//! Adversarial component: never returns.

use trustmee_abi::{EvaluateInput, EvaluateOutput};

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let mut x = input.tee_evidence.len() as u64;
    loop {
        x = core::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(1));
    }
}

trustmee_abi::export_component!(evaluate);
