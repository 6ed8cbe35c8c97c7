import sys; from flowsynth.cli import main; sys.exit(main())
