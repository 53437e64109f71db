//! `--<field> <value>` flags for every configuration key.

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches};
use tfqkd_core::config::FIELD_NAMES;

/// Keys that may be overridden from the command line. `variant` has its own
/// per-command flag.
pub fn overridable() -> impl Iterator<Item = &'static str> {
    FIELD_NAMES.into_iter().filter(|n| *n != "variant")
}

/// Overrides in the order their keys appear in a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(pub Vec<(String, String)>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(matches: &ArgMatches) -> Result<Self, clap::Error> {
        let pairs = overridable()
            .filter_map(|name| matches.get_one::<String>(name).map(|v| (name.to_string(), v.clone())))
            .collect();
        Ok(Overrides(pairs))
    }

    fn update_from_arg_matches(&mut self, matches: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(matches)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        overridable().fold(cmd, |cmd, name| {
            cmd.arg(
                Arg::new(name)
                    .long(name)
                    .value_name("VALUE")
                    .global(true)
                    .allow_negative_numbers(true)
                    .help_heading("Configuration overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}
