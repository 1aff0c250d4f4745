//! Key files hold one line: the 32-byte Ed25519 secret in hex.

use std::fs;
use std::io;
use std::path::Path;

use acrp_core::keys::SigningKey;

pub fn write_key(path: &Path, sk: &SigningKey) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{}\n", hex::encode(sk.to_bytes())))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    }
    Ok(())
}

pub fn read_key(path: &Path) -> io::Result<SigningKey> {
    let text = fs::read_to_string(path)?;
    let mut secret = [0u8; 32];
    hex::decode_to_slice(text.trim(), &mut secret).map_err(|e| {
        io::Error::new(io::ErrorKind::InvalidData, format!("{}: not a hex secret key: {e}", path.display()))
    })?;
    Ok(SigningKey::from_bytes(&secret))
}

/// Every `*.key` file in `dir`, sorted by name.
pub fn read_key_dir(dir: &Path) -> io::Result<Vec<SigningKey>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "key"));
    paths.sort();
    paths.iter().map(|p| read_key(p)).collect()
}
