//! Step-by-step descriptions printed by `heralded describe`.

use heralded::runner::ProtocolId;

pub fn describe(id: ProtocolId) -> String {
    let (summary, steps, inputs): (&str, &[&str], &[&str]) = match id {
        ProtocolId::DoubleHerald => (
            "Entangles two emitters by detecting one photon twice behind a 50:50 beam splitter.",
            &[
                "prepare each emitter in mu|up> + nu|down> with both emission modes empty",
                "pi-pulse both emitters; a |down> emitter releases one photon",
                "interfere the two modes on a 50:50 beam splitter",
                "detect both outputs; continue only on exactly one click",
                "bit-flip both emitters and repeat the pi-pulse, splitter and detection",
                "on a second single click flip back; the result is |up,down> +/- |down,up>",
                "the sign is the product of the two click signs and is kept in the Pauli frame",
            ],
            &[
                "inputs.prep: two {mu, nu} preparations (default symmetric)",
                "physics.efficiency: combined collection and detection efficiency",
                "physics.dark_count_prob, physics.mismatch (relative emission-rate difference)",
            ],
        ),
        ProtocolId::HeteroTimebin => (
            "Entangles one emitter with a time-bin photon.",
            &[
                "prepare the emitter in mu|up> + nu|down>",
                "pi-pulse and wait: a |down> emitter releases an early photon",
                "bit-flip the emitter",
                "pi-pulse and wait again: the other branch releases a late photon",
                "result: nu|up>|E> + mu|down>|L>",
            ],
            &[
                "inputs.prep: one {mu, nu} preparation (default symmetric)",
                "physics.cavity: {g, kappa, t_wait} sets the emission probability (default 1)",
            ],
        ),
        ProtocolId::HeteroPolarization => (
            "Entangles an encoded emitter pair with a polarization photon.",
            &[
                "prepare a0|down,up> + a1|up,down> on two emitters",
                "pi-pulse both; exactly one photon is released in every branch",
                "rotate the second emitter's photon from H to V",
                "merge both paths on a polarizing beam splitter",
                "result: a0|down,up>|H> + a1|up,down>|V>",
            ],
            &["inputs.amplitudes: [a0, a1] (default balanced)"],
        ),
        ProtocolId::ReduceComposite => (
            "Reduces the encoded pair of hetero-polarization to a single emitter.",
            &[
                "run hetero-polarization",
                "Hadamard on the measured emitter, then read it out",
                "result: the kept emitter and the photon in a0|.>|H> +/- a1|.>|V>",
                "a |down> readout gives the minus sign, kept as Z on the photon",
            ],
            &[
                "inputs.amplitudes: [a0, a1] (default balanced)",
                "inputs.measured_qubit: 0 or 1 (default 1)",
            ],
        ),
        ProtocolId::TimebinPair => (
            "Turns a Bell pair of emitters into a time-bin entangled photon pair.",
            &[
                "start from (|up,down> + |down,up>)/sqrt 2",
                "pi-pulse both emitters: the |down> emitter yields the early photon",
                "bit-flip both emitters",
                "pi-pulse again: the other emitter yields the late photon",
                "Hadamard on both emitters and read them out",
                "result: |E,L> +/- |L,E>; each readout has probability 1/4",
                "a |down> readout on emitter j is corrected by Z on photon j",
            ],
            &["physics.efficiency: photon survival probability per photon"],
        ),
        ProtocolId::DualrailPair => (
            "Turns four emitters in |0~1~> + |1~0~> into a dual-rail or polarization photon pair.",
            &[
                "start from |up,down,down,up> + |down,up,up,down>, pairs (0,1) and (2,3) encode one photon each",
                "pi-pulse all four emitters; each pair releases one photon into one of two rails",
                "for polarization, rotate the second rail to V and merge on a polarizing beam splitter",
                "Hadamard on all emitters and read them out (16 outcomes)",
                "result: |1,0;0,1> + |0,1;1,0> (|H,V> + |V,H>) up to Z corrections on the photons",
            ],
            &[
                "inputs.encoding: dual_rail (default) or polarization",
                "physics.efficiency: photon survival probability per photon",
            ],
        ),
        ProtocolId::Multiphoton => (
            "Produces an arbitrary N-photon state sum_k alpha_k |P_k> from 2N emitters.",
            &[
                "prepare 2N emitters in sum_k alpha_k |S_k>, each photon bit encoded on one emitter pair",
                "pi-pulse all emitters: sum_k alpha_k |S_k>|P_k>",
                "for polarization, merge each photon's two rails on a polarizing beam splitter",
                "postselect on all N photons surviving (probability efficiency^N)",
                "Hadamard on all emitters and read them out (4^N outcomes)",
                "Z on photon j when the readouts of its emitter pair differ",
            ],
            &[
                "inputs.photons: N (default 2)",
                "inputs.amplitudes: 2^N amplitudes (default GHZ)",
                "inputs.encoding: polarization (default) or dual_rail",
                "physics.efficiency: photon survival probability per photon",
            ],
        ),
        ProtocolId::TimebinMultiphoton => (
            "Produces an arbitrary N-photon time-bin state from N emitters.",
            &[
                "prepare N emitters in the complement of each target string",
                "pi-pulse all emitters (early bin), bit-flip all, pi-pulse again (late bin)",
                "postselect on all N photons surviving (probability efficiency^N)",
                "Hadamard on all emitters and read them out (2^N outcomes)",
                "Z on photon j when emitter j reads |down>",
            ],
            &[
                "inputs.photons: N (default 2)",
                "inputs.amplitudes: 2^N amplitudes (default GHZ)",
                "physics.efficiency: photon survival probability per photon",
            ],
        ),
    };
    let mut out = format!("{id}: {summary}\n\nSteps:\n");
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&format!("  {}. {s}\n", i + 1));
    }
    out.push_str("\nInputs:\n");
    for s in inputs {
        out.push_str(&format!("  - {s}\n"));
    }
    out
}
