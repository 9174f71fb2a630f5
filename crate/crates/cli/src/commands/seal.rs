use std::process::ExitCode;

use anyhow::Result;
use seclaas_core::pipeline::PipelineError;

use super::{ok, open_pipeline, parse_chain, settings};
use crate::GlobalOpts;

pub fn run(global: GlobalOpts, ip: String, day: String, json: bool) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let chain = parse_chain(&ip, &day)?;
    let (_stores, pipeline) = open_pipeline(&settings)?;

    let (ppl, fresh) = match pipeline.seal_day(chain) {
        Ok(ppl) => (ppl, true),
        Err(PipelineError::AlreadySealed { ppl, .. }) => (*ppl, false),
        Err(e) => return Err(e.into()),
    };

    if json {
        println!("{}", serde_json::to_string_pretty(&ppl)?);
    } else {
        if !fresh {
            println!("{chain} was already sealed; existing proof:");
        }
        println!("sealed {chain}");
        println!("  digest:       {}", ppl.ae_digest);
        println!("  signature:    {} bytes", ppl.signature.len());
        println!("  published at: {}", ppl.published_at.to_rfc3339());
    }
    ok()
}
