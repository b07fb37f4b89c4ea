use super::ModelError;

pub type TokenId = u32;

/// Reserved ids above the 256 byte tokens.
pub mod special {
    pub const BOS: u32 = 256;
    pub const EOS: u32 = 257;
    pub const ITEM_SEP: u32 = 258;
    pub const EMBEDDING: u32 = 259;
    pub const PAD: u32 = 260;
    pub const SPARE: [u32; 3] = [261, 262, 263];
    /// Reserved answer tokens read by the relevance head.
    pub const YES: u32 = 264;
    pub const NO: u32 = 265;
    pub const FIRST_FREE: u32 = 266;
}

/// Byte-level tokenizer: byte `b` maps to token `b`.
#[derive(Debug, Clone, Copy)]
pub struct ByteTokenizer {
    max_seq: usize,
}

impl ByteTokenizer {
    pub fn new(max_seq: usize) -> Self {
        Self { max_seq }
    }

    pub fn max_seq(&self) -> usize {
        self.max_seq
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, ModelError> {
        let len = text.len();
        if len > self.max_seq {
            return Err(ModelError::Length { len, max_seq: self.max_seq });
        }
        Ok(text.bytes().map(TokenId::from).collect())
    }

    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<String, ModelError> {
        let bytes = tokens
            .iter()
            .map(|&t| u8::try_from(t).map_err(|_| ModelError::Detokenize(format!("non-byte token {t}"))))
            .collect::<Result<Vec<u8>, _>>()?;
        String::from_utf8(bytes).map_err(|e| ModelError::Detokenize(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_and_ascii() {
        let tok = ByteTokenizer::new(16);
        assert!(tok.tokenize("").unwrap().is_empty());
        assert_eq!(tok.tokenize("AB").unwrap(), vec![65, 66]);
    }

    #[test]
    fn overflow_is_a_length_error() {
        let tok = ByteTokenizer::new(3);
        assert_eq!(tok.tokenize("abcd"), Err(ModelError::Length { len: 4, max_seq: 3 }));
    }

    #[test]
    fn round_trip_random_strings() {
        let tok = ByteTokenizer::new(4096);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(0..64);
            let s: String = (0..n).map(|_| rng.random::<char>()).collect();
            let ids = tok.tokenize(&s).unwrap();
            assert_eq!(tok.detokenize(&ids).unwrap(), s);
        }
    }

    #[test]
    fn specials_do_not_detokenize() {
        let tok = ByteTokenizer::new(8);
        assert!(tok.detokenize(&[special::BOS]).is_err());
    }
}
