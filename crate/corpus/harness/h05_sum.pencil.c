int sum(int n, int A[const restrict static n])
{
  int s = 0;
#pragma pencil reduction (+:s)
  for (int i = 0; i < n; i++)
    s += A[i];
  return s;
}
