use rand::Rng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_public::{p_mint_user, p_qverify, Certificate, PublicKeyBundle, PublicNote, Serial};
use semiqm_core::protocol::{BankLink, Msg, ProtocolError};

/// A public-scheme holder that remembers every spend it made, so it can try
/// them again.
#[derive(Debug)]
pub struct PublicWallet {
    pk: PublicKeyBundle,
    pub notes: Vec<PublicNote>,
    pub spends: Vec<(Serial, Vec<u8>, Certificate)>,
}

impl PublicWallet {
    pub fn new(pk: PublicKeyBundle) -> Self {
        Self {
            pk,
            notes: Vec::new(),
            spends: Vec::new(),
        }
    }

    pub fn mint(&mut self, link: &mut dyn BankLink, rng: &mut ChaCha20Rng) -> Result<(), ProtocolError> {
        let note = p_mint_user(link.open()?.as_mut(), &self.pk, rng)?;
        self.notes.push(note);
        Ok(())
    }

    pub fn qverify(&self, index: usize) -> bool {
        p_qverify(&self.pk, &self.notes[index])
    }

    pub fn is_spent(&self, index: usize) -> bool {
        self.notes[index].bolt.is_consumed()
    }

    /// Converts the bolt to a certificate and spends it, keeping a copy of
    /// what was sent.
    pub fn spend(&mut self, link: &mut dyn BankLink, index: usize) -> Result<bool, ProtocolError> {
        let note = &mut self.notes[index];
        let certificate = self
            .pk
            .suite
            .gen_certificate(&mut note.bolt, &note.serial)
            .map_err(|_| ProtocolError::NoteConsumed)?;
        let spend = (note.serial, note.signature.clone(), certificate);
        self.spends.push(spend.clone());
        send(link, spend)
    }

    /// Sends an earlier spend again.
    pub fn respend(&mut self, link: &mut dyn BankLink, which: usize) -> Result<bool, ProtocolError> {
        send(link, self.spends[which].clone())
    }

    /// Spends note `index` with a uniformly random certificate, leaving the
    /// bolt alone.
    pub fn forge(
        &mut self,
        link: &mut dyn BankLink,
        index: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, ProtocolError> {
        let note = &self.notes[index];
        send(link, (note.serial, note.signature.clone(), Certificate(rng.gen())))
    }
}

fn send(
    link: &mut dyn BankLink,
    (serial, signature, certificate): (Serial, Vec<u8>, Certificate),
) -> Result<bool, ProtocolError> {
    match link.open()?.exchange(Msg::PSpend {
        serial,
        signature,
        certificate,
    })? {
        Msg::Result { accepted } => Ok(accepted),
        other => Err(ProtocolError::unexpected("RESULT", &other)),
    }
}
