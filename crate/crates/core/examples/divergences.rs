//! Divergences between two lens distributions, dense and sparse.

use lens_effort::distributions::{
    cosine_distance, entropy, jsd, kl_divergence, self_certainty_term, softmax_project, HiddenVector, LogBase,
    LogitVector, ProbVector,
};

fn main() -> lens_effort::Result<()> {
    let p = ProbVector::dense(vec![0.7, 0.2, 0.1, 0.0])?;
    let q = ProbVector::dense(vec![0.1, 0.2, 0.3, 0.4])?;
    println!("jsd(p, q)        = {:.6} nats", jsd(&p, &q)?);
    println!("jsd(p, q)        = {:.6} bits", LogBase::Base2.from_nats(jsd(&p, &q)?));
    println!("kl(p || q)       = {:.6}", kl_divergence(&p, &q)?);
    println!("entropy(q)       = {:.6}", entropy(&q));
    println!("self-certainty p = {:.6}", self_certainty_term(&p));

    // Top-2 logits over a 6-token vocabulary; the rest is one tail bucket.
    let z = LogitVector::sparse(6, vec![0, 3], vec![2.0, 1.0], 0.5)?;
    let sparse = softmax_project(&z)?;
    println!("sparse tail mass = {:.6}", sparse.tail_mass());
    println!("jsd(sparse, U)   = {:.6}", jsd(&sparse, &ProbVector::uniform(6))?);

    let a = HiddenVector::new(vec![1.0, 0.0, 1.0])?;
    let b = HiddenVector::new(vec![0.0, 1.0, 1.0])?;
    println!("cosine distance  = {:.6}", cosine_distance(&a, &b)?);
    Ok(())
}
