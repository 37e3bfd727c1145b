// SPDX-License-Identifier: Apache-2.0

//! Adversarial component: allocates until the host refuses to grow memory.

use trustmee_abi::{EvaluateInput, EvaluateOutput};

fn evaluate(_: &EvaluateInput) -> EvaluateOutput {
    let mut hoard: Vec<Vec<u8>> = Vec::new();
    loop {
        let mut chunk = vec![0u8; 1 << 20];
        chunk[0] = hoard.len() as u8;
        hoard.push(core::hint::black_box(chunk));
    }
}

trustmee_abi::export_component!(evaluate);
