pub mod naive;
pub mod oracle;
