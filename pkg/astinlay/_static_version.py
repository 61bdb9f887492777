# Overwritten by setup.py when a source or binary distribution is built.
# "__use_git__" makes _version.py ask git for the version.

version = "__use_git__"

# filled in by 'git archive'
refnames = "$Format:%D$"
git_hash = "$Format:%h$"
