app_name = "dlalign"
app_title = "DLAlign"
app_publisher = "DLAlign contributors"
app_description = "Delta-action sim-to-sim alignment toolkit for a planar articulated chain"
app_license = "mit"

# Commands
# ------------------
# CLI subcommand -> stage command (resolved by dotted path)

commands = {
	"gen-motions": "dlalign.dlalign.pipeline.cmd_gen_motions",
	"pretrain": "dlalign.dlalign.pipeline.cmd_pretrain",
	"collect": "dlalign.dlalign.pipeline.cmd_collect",
	"train-delta": "dlalign.dlalign.pipeline.cmd_train_delta",
	"train-delta-dyn": "dlalign.dlalign.pipeline.cmd_train_delta_dyn",
	"sysid": "dlalign.dlalign.pipeline.cmd_sysid",
	"finetune": "dlalign.dlalign.pipeline.cmd_finetune",
	"noise-finetune": "dlalign.dlalign.pipeline.cmd_noise_finetune",
	"eval": "dlalign.dlalign.pipeline.cmd_eval",
	"ablate": "dlalign.dlalign.pipeline.cmd_ablate",
	"full-pipeline": "dlalign.dlalign.pipeline.cmd_full_pipeline",
}

# Debug helpers
# ------------------

status_command = "dlalign.dlalign.debug_helpers.check_run_status"

# Exit codes
# ------------------
# Exception class -> process exit code

exit_codes = {
	"dlalign.dlalign.exceptions.ValidationError": 2,
	"dlalign.dlalign.exceptions.LockError": 2,
	"dlalign.dlalign.exceptions.DigestMismatchError": 3,
	"dlalign.dlalign.exceptions.NumericFaultError": 4,
}
