pub mod bd;
pub mod codec;
pub mod eval;
pub mod project;
pub mod train;

use std::path::Path;

use crate::error::{CliError, Result};

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(e).context(dir.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::data(e).context(path.display()))
}
