void local_tmp(int n, int A[const restrict static n])
{
  int tmp[8];
  for (int i = 0; i < 8; i++)
    tmp[i] = A[i] + i;
  for (int i = 0; i < 8; i++)
    A[7 - i] = tmp[i];
}
