from boxtraj.main import main

main()
